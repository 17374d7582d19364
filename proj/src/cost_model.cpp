#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "sbnn/archsim.hpp"
#include "sbnn/errors.hpp"
#include "energy_events.hpp"

namespace sbnn {

namespace {

int width_index(int bits) {
  switch (bits) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    case 8: return 3;
    default:
      fail(ErrorCode::InvalidConfig, "operand width must be 1, 2, 4 or 8, got " + std::to_string(bits));
  }
}

// Geometric interpolation between the 1-bit and 8-bit anchors.
std::array<double, 4> geometric(double one, double eight) {
  std::array<double, 4> v{};
  for (int i = 0; i < 4; ++i) v[static_cast<std::size_t>(i)] = one * std::pow(eight / one, i / 3.0);
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string_view to_string(RngHardware rng) {
  return rng == RngHardware::Lfsr8 ? "lfsr8" : "mram";
}

RngHardware parse_rng_hardware(std::string_view name) {
  if (name == "lfsr8") return RngHardware::Lfsr8;
  if (name == "mram") return RngHardware::MramTrng;
  fail(ErrorCode::InvalidConfig, "unknown RNG hardware '" + std::string(name) + "'");
}

CostModel CostModel::calibrate(const CalibrationTargets& t) {
  const CellGridConfig grid;
  const auto layers = layout_shape(t.reference_shape, grid);
  if (layers.empty()) fail(ErrorCode::InvalidConfig, "calibration shape has no layers");
  const auto first_words = static_cast<double>(layers.front().words());
  const double first_cells =
      static_cast<double>(layers.front().last_cell - layers.front().first_cell + 1);
  double rest_words = 0.0;
  double neurons = 0.0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (k > 0) rest_words += static_cast<double>(layers[k].words());
    neurons += static_cast<double>(layers[k].neurons);
  }

  // Stochastic energy is E_base + T * e_bin and conventional is E_base + e_8.
  // The energy point, the conventional/stochastic factor at that point and the
  // crossover (E_stoch(T_c) = E_conv) pin all three unknowns.
  const double e_stoch = t.energy_stoch_nj;
  const double e_conv = t.energy_factor * e_stoch;
  const double e_bin =
      (e_conv - e_stoch) / (t.crossover_presentations - t.energy_stoch_presentations);
  const double e_base = e_stoch - t.energy_stoch_presentations * e_bin;
  const double e_8 = e_conv - e_base;

  CostModel m;
  const double eps1 = e_bin * 1e3 / first_words;  // pJ per 1-bit cell-cycle
  m.cell_energy_pj = geometric(eps1, eps1 * t.energy_ratio_8bit);
  // 8-bit layers run at 4.5x the per-cycle energy; the remaining factor is
  // absorbed as extra cycles per word.
  const double cycles8 = e_8 * 1e3 / (first_words * m.cell_energy_pj[3]);
  m.cycles_per_word = geometric(1.0, cycles8);
  m.compare_energy_pj = (e_base * 1e3 - rest_words * eps1) / neurons;

  // Area: the whole grid is fabricated. With an 8-bit first layer the cells
  // holding that layer are `area_ratio` times larger; the binary system adds
  // the LFSR bank.
  const auto cells = static_cast<double>(grid.cells());
  const double bin_core = t.area_binary_mm2 - t.lfsr_area_um2 * 1e-6;
  const double a1_mm2 = (t.area_8bit_mm2 - bin_core) / (first_cells * (t.area_ratio_8bit - 1.0));
  m.cell_area_um2 = geometric(a1_mm2 * 1e6, a1_mm2 * 1e6 * t.area_ratio_8bit);
  m.periphery_area_mm2 = bin_core - cells * a1_mm2;

  m.lfsr_energy_nj = t.lfsr_energy_nj;
  m.lfsr_area_um2 = t.lfsr_area_um2;
  m.mram_energy_nj = t.mram_energy_nj;
  m.mram_area_um2 = t.mram_area_um2;
  m.mult8_pj = t.mult8_pj;
  m.add8_pj = t.add8_pj;
  m.validate();
  return m;
}

CostModel CostModel::defaults() {
  static const CostModel model = calibrate(CalibrationTargets{});
  return model;
}

double CostModel::cell_area(int bits) const { return cell_area_um2[width_index(bits)]; }
double CostModel::cell_energy(int bits) const { return cell_energy_pj[width_index(bits)]; }
double CostModel::word_cycles(int bits) const { return cycles_per_word[width_index(bits)]; }

double CostModel::rng_energy_nj(RngHardware rng) const {
  return rng == RngHardware::Lfsr8 ? lfsr_energy_nj : mram_energy_nj;
}

double CostModel::rng_area_mm2(RngHardware rng) const {
  return (rng == RngHardware::Lfsr8 ? lfsr_area_um2 : mram_area_um2) * 1e-6;
}

void CostModel::validate() const {
  const auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) {
      fail(ErrorCode::InvalidConfig, std::string(name) + " must be positive and finite");
    }
  };
  const auto non_negative = [](double v, const char* name) {
    if (!(std::isfinite(v) && v >= 0.0)) {
      fail(ErrorCode::InvalidConfig, std::string(name) + " must be non-negative and finite");
    }
  };
  for (double v : cell_area_um2) positive(v, "cell area");
  for (double v : cell_energy_pj) positive(v, "cell energy");
  for (double v : cycles_per_word) positive(v, "cycles per word");
  positive(compare_energy_pj, "compare energy");
  non_negative(periphery_area_mm2, "periphery area");
  if (!(accumulate_fraction >= 0.0 && accumulate_fraction <= 1.0)) {
    fail(ErrorCode::InvalidConfig, "accumulate fraction must lie in [0, 1]");
  }
  non_negative(lfsr_energy_nj, "LFSR energy");
  non_negative(lfsr_area_um2, "LFSR area");
  non_negative(mram_energy_nj, "MRAM energy");
  non_negative(mram_area_um2, "MRAM area");
  non_negative(mult8_pj, "8-bit multiply energy");
  non_negative(add8_pj, "8-bit add energy");
}

namespace {

constexpr std::array<int, 4> kWidths{1, 2, 4, 8};

std::vector<std::pair<std::string, double*>> config_fields(CostModel& m) {
  std::vector<std::pair<std::string, double*>> f;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string b = std::to_string(kWidths[i]);
    f.emplace_back("cell_area_um2_" + b + "bit", &m.cell_area_um2[i]);
    f.emplace_back("cell_energy_pj_" + b + "bit", &m.cell_energy_pj[i]);
    f.emplace_back("cycles_per_word_" + b + "bit", &m.cycles_per_word[i]);
  }
  f.emplace_back("compare_energy_pj", &m.compare_energy_pj);
  f.emplace_back("periphery_area_mm2", &m.periphery_area_mm2);
  f.emplace_back("accumulate_fraction", &m.accumulate_fraction);
  f.emplace_back("lfsr_energy_nj", &m.lfsr_energy_nj);
  f.emplace_back("lfsr_area_um2", &m.lfsr_area_um2);
  f.emplace_back("mram_energy_nj", &m.mram_energy_nj);
  f.emplace_back("mram_area_um2", &m.mram_area_um2);
  f.emplace_back("mult8_pj", &m.mult8_pj);
  f.emplace_back("add8_pj", &m.add8_pj);
  return f;
}

}  // namespace

void CostModel::apply_config(std::string_view text) {
  CostModel next = *this;
  const auto fields = config_fields(next);
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    double* target = nullptr;
    for (const auto& [name, ptr] : fields) {
      if (name == key) target = ptr;
    }
    if (target == nullptr) {
      fail(ErrorCode::InvalidConfig, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      fail(ErrorCode::InvalidConfig,
           "line " + std::to_string(lineno) + ": '" + value + "' is not a number");
    }
    *target = v;
  }
  next.validate();
  *this = next;
}

std::string CostModel::to_config() const {
  CostModel copy = *this;
  std::ostringstream out;
  out.precision(17);
  for (const auto& [name, ptr] : config_fields(copy)) out << name << " = " << *ptr << '\n';
  return out.str();
}

CostModel load_cost_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open cost model file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  CostModel m = CostModel::defaults();
  m.apply_config(text.str());
  return m;
}

double estimate_area(std::span<const std::size_t> shape, int first_layer_bits, RngHardware rng,
                     const CostModel& cost, const CellGridConfig& grid) {
  const auto layers = layout_shape(shape, grid);
  const double a1 = cost.cell_area(1) * 1e-6;
  double area = cost.periphery_area_mm2 + static_cast<double>(grid.cells()) * a1;
  if (layers.empty()) return area;
  if (first_layer_bits == 1) return area + cost.rng_area_mm2(rng);
  const auto first_cells = static_cast<double>(layers.front().last_cell - layers.front().first_cell + 1);
  return area + first_cells * (cost.cell_area(first_layer_bits) * 1e-6 - a1);
}

namespace detail {

// Splits word-operation energy between the cell datapath and accumulation,
// which lands in registers or the column trees depending on the mode.
void add_word_energy(EnergyBreakdown& e, double nj, double accumulate_fraction,
                     AccumulationMode mode) {
  e.cells_nj += nj * (1.0 - accumulate_fraction);
  if (mode == AccumulationMode::SeqToPar) {
    e.registers_nj += nj * accumulate_fraction;
  } else {
    e.popcount_trees_nj += nj * accumulate_fraction;
  }
}

}  // namespace detail

EnergyBreakdown estimate_energy(std::span<const std::size_t> shape, int presentations,
                                int first_layer_bits, RngHardware rng, const CostModel& cost,
                                const CellGridConfig& grid) {
  const auto layers = layout_shape(shape, grid);
  EnergyBreakdown e;
  if (layers.empty()) return e;
  if (first_layer_bits == 1 && presentations < 1) {
    fail(ErrorCode::InvalidConfig, "stochastic first layer needs T >= 1");
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto words = static_cast<double>(layers[k].words());
    double pj = 0.0;
    if (k > 0) {
      pj = words * cost.cell_energy(1);
    } else if (first_layer_bits == 1) {
      pj = presentations * words * cost.cell_energy(1);
    } else {
      pj = words * cost.word_cycles(first_layer_bits) * cost.cell_energy(first_layer_bits);
    }
    detail::add_word_energy(e, pj * 1e-3, cost.accumulate_fraction, grid.mode);
    e.registers_nj += static_cast<double>(layers[k].neurons) * cost.compare_energy_pj * 1e-3;
  }
  if (first_layer_bits == 1) e.rng_nj = presentations * cost.rng_energy_nj(rng);
  return e;
}

double compare_nonbinarized(std::span<const std::size_t> shape, const CostModel& cost) {
  double macs = 0.0;
  for (std::size_t k = 0; k + 1 < shape.size(); ++k) {
    macs += static_cast<double>(shape[k]) * static_cast<double>(shape[k + 1]);
  }
  return macs * (cost.mult8_pj + cost.add8_pj) * 1e-3;
}

}  // namespace sbnn
