#pragma once

#include "sbnn/archsim.hpp"

namespace sbnn::detail {

void add_word_energy(EnergyBreakdown& e, double nj, double accumulate_fraction,
                     AccumulationMode mode);

}  // namespace sbnn::detail
