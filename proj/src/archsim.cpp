#include "sbnn/archsim.hpp"

#include <algorithm>
#include <bit>
#include <sstream>
#include <string>

#include "energy_events.hpp"
#include "sbnn/errors.hpp"

namespace sbnn {

std::string_view to_string(AccumulationMode mode) {
  return mode == AccumulationMode::SeqToPar ? "seq-to-par" : "par-to-seq";
}

AccumulationMode parse_accumulation_mode(std::string_view name) {
  if (name == "seq-to-par") return AccumulationMode::SeqToPar;
  if (name == "par-to-seq") return AccumulationMode::ParToSeq;
  fail(ErrorCode::InvalidConfig, "unknown accumulation mode '" + std::string(name) + "'");
}

void CellGridConfig::validate() const {
  if (grid_rows == 0 || grid_cols == 0) fail(ErrorCode::InvalidConfig, "grid must be non-empty");
  if (xnor_width != 32) fail(ErrorCode::InvalidConfig, "cells operate on 32-bit words");
  if (cell_bits == 0 || cell_bits % xnor_width != 0) {
    fail(ErrorCode::InvalidConfig, "cell memory must hold whole 32-bit words");
  }
  if (operating_bits != 1 && operating_bits != 2 && operating_bits != 4 && operating_bits != 8) {
    fail(ErrorCode::InvalidConfig, "operating bits must be 1, 2, 4 or 8");
  }
}

std::size_t Placement::words_used() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.words();
  return n;
}

std::size_t Placement::cells_used() const noexcept {
  if (layers.empty() || layers.back().words() == 0) return 0;
  return layers.back().last_cell + 1;
}

std::vector<LayerPlacement> layout_shape(std::span<const std::size_t> shape,
                                         const CellGridConfig& grid) {
  grid.validate();
  std::vector<LayerPlacement> out;
  const std::size_t per_cell = grid.words_per_cell();
  std::size_t next = 0;
  for (std::size_t k = 0; k + 1 < shape.size(); ++k) {
    if (shape[k + 1] > kMaxLayerWidth) {
      fail(ErrorCode::LayerTooWide, "layer " + std::to_string(k + 1) + " has " +
                                        std::to_string(shape[k + 1]) + " neurons");
    }
    LayerPlacement l;
    l.neurons = shape[k + 1];
    l.fan_in = shape[k];
    l.words_per_neuron = (shape[k] + grid.xnor_width - 1) / grid.xnor_width;
    l.first_word = next;
    next += l.words();
    if (next > grid.capacity_words()) {
      fail(ErrorCode::GridCapacityExceeded,
           "network needs " + std::to_string(next) + " words, grid holds " +
               std::to_string(grid.capacity_words()));
    }
    if (l.words() > 0) {
      l.first_cell = l.first_word / per_cell;
      l.last_cell = (next - 1) / per_cell;
      for (std::size_t c = l.first_cell; c <= l.last_cell; ++c) {
        const std::size_t lo = std::max(l.first_word, c * per_cell);
        const std::size_t hi = std::min(next, (c + 1) * per_cell);
        l.max_words_per_cell = std::max(l.max_words_per_cell, hi - lo);
      }
    }
    out.push_back(l);
  }
  return out;
}

Placement map_model(const BnnModel& model, const CellGridConfig& grid) {
  Placement p;
  p.grid = grid;
  p.layers = layout_shape(model.layer_sizes(), grid);
  p.model = model;
  return p;
}

namespace {

// 32-bit word `w` of a packed row.
std::uint32_t word32(std::span<const Word> words, std::size_t w) {
  return static_cast<std::uint32_t>(words[w / 2] >> (32 * (w % 2)));
}

// Popcounts of one layer computed the way the cells do it: per 32-bit word,
// XNOR then a local popcount, partial counts accumulated per neuron.
std::vector<std::int64_t> cell_popcounts(const BitMatrix& w, const BitVector& a,
                                         const LayerPlacement& l) {
  std::vector<std::int64_t> p(l.neurons, 0);
  const auto in = a.words();
  for (std::size_t i = 0; i < l.neurons; ++i) {
    const auto row = w.row_words(i);
    for (std::size_t k = 0; k < l.words_per_neuron; ++k) {
      const std::size_t valid = std::min<std::size_t>(32, l.fan_in - 32 * k);
      const std::uint32_t mask = valid == 32 ? ~0U : (1U << valid) - 1U;
      // The hardware popcount output is 5 bits; a full 32-bit match is
      // counted as 32 here.
      p[i] += std::popcount(static_cast<std::uint32_t>(~(word32(row, k) ^ word32(in, k)) & mask));
    }
  }
  return p;
}

}  // namespace

SimReport simulate_inference(const Placement& placement, std::span<const BitVector> presentations,
                             const CostModel& cost, RngHardware rng) {
  SimReport r;
  if (placement.empty()) return r;
  const BnnModel& model = placement.model;
  const auto& layers = placement.layers;
  const std::size_t depth = layers.size();
  if (presentations.empty()) fail(ErrorCode::InvalidConfig, "no presentations");
  for (const auto& x : presentations) {
    if (x.size() != layers.front().fan_in) {
      fail(ErrorCode::DimensionMismatch, "presentation width " + std::to_string(x.size()) +
                                             " != first layer fan-in " +
                                             std::to_string(layers.front().fan_in));
    }
  }
  const auto presentations_count = static_cast<std::int64_t>(presentations.size());
  r.layer_cycles.assign(depth, 0);
  const auto mode = placement.grid.mode;

  // First layer: registers hold the running sum of 2p - n over presentations.
  const LayerPlacement& first = layers.front();
  std::vector<std::int64_t> acc(first.neurons, 0);
  for (const auto& x : presentations) {
    const auto p = cell_popcounts(model.layer(0).weights, x, first);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] += 2 * p[i] - static_cast<std::int64_t>(first.fan_in);
    }
    r.layer_cycles[0] += first.max_words_per_cell;
    r.word_ops += first.words();
    ++r.rng_cycles;
  }

  std::size_t predicted = 0;
  if (depth == 1) {
    predicted = argmax(model.output_scores(acc, presentations_count));
  } else {
    BitVector a(first.neurons);
    const auto& mu = model.layer(0).mu;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (reaches_threshold(acc[i], presentations_count, mu[i])) a.set(i, true);
    }
    for (std::size_t k = 1; k < depth; ++k) {
      const LayerPlacement& l = layers[k];
      const auto p = cell_popcounts(model.layer(k).weights, a, l);
      r.layer_cycles[k] = l.max_words_per_cell;
      r.word_ops += l.words();
      if (k + 1 == depth) {
        std::vector<std::int64_t> sums(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
          sums[i] = 2 * p[i] - static_cast<std::int64_t>(l.fan_in);
        }
        predicted = argmax(model.output_scores(sums, 1));
      } else {
        const auto& theta = model.binary_layer(k).thresholds;
        BitVector next(l.neurons);
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] >= theta[i]) next.set(i, true);
        }
        a = std::move(next);
      }
    }
  }
  r.predicted = predicted;
  for (const auto& l : layers) r.compares += l.neurons;
  for (auto c : r.layer_cycles) r.cycles += c;

  // Energy from the counted events.
  for (std::size_t k = 0; k < depth; ++k) {
    const double ops = k == 0 ? static_cast<double>(presentations_count) * layers[k].words()
                              : static_cast<double>(layers[k].words());
    detail::add_word_energy(r.energy, ops * cost.cell_energy(1) * 1e-3, cost.accumulate_fraction,
                            mode);
  }
  r.energy.registers_nj += static_cast<double>(r.compares) * cost.compare_energy_pj * 1e-3;
  r.energy.rng_nj = static_cast<double>(r.rng_cycles) * cost.rng_energy_nj(rng);
  r.area_mm2 = estimate_area(model.layer_sizes(), 1, rng, cost, placement.grid);
  return r;
}

std::string sim_report_csv_header() {
  return "predicted,cycles,first_layer_cycles,word_ops,compares,rng_cycles,cells_nj,"
         "popcount_trees_nj,registers_nj,rng_nj,total_nj,area_mm2";
}

std::string sim_report_csv_row(const SimReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << r.predicted << ',' << r.cycles << ','
      << (r.layer_cycles.empty() ? 0 : r.layer_cycles.front()) << ',' << r.word_ops << ','
      << r.compares << ',' << r.rng_cycles << ',' << r.energy.cells_nj << ','
      << r.energy.popcount_trees_nj << ',' << r.energy.registers_nj << ',' << r.energy.rng_nj
      << ',' << r.energy.total() << ',' << r.area_mm2;
  return out.str();
}

std::string format_sim_report(const SimReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << "predicted class   " << r.predicted << '\n'
      << "cycles            " << r.cycles << " (";
  for (std::size_t k = 0; k < r.layer_cycles.size(); ++k) {
    out << (k ? " + " : "") << r.layer_cycles[k];
  }
  out << ")\n"
      << "energy (nJ)       " << r.energy.total() << '\n'
      << "  cells           " << r.energy.cells_nj << '\n'
      << "  popcount trees  " << r.energy.popcount_trees_nj << '\n'
      << "  registers       " << r.energy.registers_nj << '\n'
      << "  rng             " << r.energy.rng_nj << '\n'
      << "area (mm2)        " << r.area_mm2 << '\n';
  return out.str();
}

}  // namespace sbnn
