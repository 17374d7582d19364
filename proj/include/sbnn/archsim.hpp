#pragma once

// Functional cycle-level model of the in-memory accelerator: a 32x32 grid of
// cells, each with a 2-kbit weight memory read as 32-bit words, 32 XNOR gates
// and a local popcount, plus a parametric area/energy model.
//
// One cycle is one 32-bit word operation in every active cell. Weight rows are
// packed as consecutive 32-bit words across cells, so cells work on a layer
// in parallel and the layer takes as many cycles as its busiest cell holds
// words (times T for the stochastic first layer).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sbnn/bitcore.hpp"
#include "sbnn/model.hpp"

namespace sbnn {

enum class AccumulationMode { SeqToPar, ParToSeq };

std::string_view to_string(AccumulationMode mode);
AccumulationMode parse_accumulation_mode(std::string_view name);

struct CellGridConfig {
  std::size_t grid_rows = 32;
  std::size_t grid_cols = 32;
  std::size_t cell_bits = 2048;
  std::size_t xnor_width = 32;
  int popcount_bits = 5;
  int operating_bits = 1;  // first-layer operand width: 1, 2, 4 or 8
  AccumulationMode mode = AccumulationMode::SeqToPar;

  std::size_t cells() const noexcept { return grid_rows * grid_cols; }
  std::size_t words_per_cell() const noexcept { return cell_bits / xnor_width; }
  std::size_t capacity_words() const noexcept { return cells() * words_per_cell(); }
  void validate() const;
};

// Which physical generator feeds the stochastic first layer.
enum class RngHardware { Lfsr8, MramTrng };

std::string_view to_string(RngHardware rng);
// "lfsr8" or "mram".
RngHardware parse_rng_hardware(std::string_view name);

// Reported constants the default cost model is solved from.
struct CalibrationTargets {
  std::vector<std::size_t> reference_shape{784, 1024, 1024, 10};
  double area_binary_mm2 = 0.73;   // binary first layer, LFSR included
  double area_8bit_mm2 = 1.95;     // 8-bit first layer
  double area_ratio_8bit = 6.0;    // per cell, 8-bit vs 1-bit
  double energy_ratio_8bit = 4.5;  // per cell-cycle, 8-bit vs 1-bit
  double energy_stoch_nj = 90.0;   // stochastic system at the presentations below
  int energy_stoch_presentations = 3;
  double energy_factor = 2.1;      // conventional / stochastic at that point
  int crossover_presentations = 8; // stochastic costs as much as conventional
  double lfsr_energy_nj = 0.52;
  double lfsr_area_um2 = 48000.0;
  double mram_energy_nj = 0.125;
  double mram_area_um2 = 0.0;
  double mult8_pj = 0.3;
  double add8_pj = 0.04;
};

struct CostModel {
  // Indexed by operand width 1, 2, 4, 8.
  std::array<double, 4> cell_area_um2{};
  std::array<double, 4> cell_energy_pj{};   // per active cell-cycle
  std::array<double, 4> cycles_per_word{};  // cell-cycles per 32-operand word
  double compare_energy_pj = 0.0;           // one threshold comparison
  double periphery_area_mm2 = 0.0;
  double accumulate_fraction = 0.25;        // share of word energy spent accumulating
  double lfsr_energy_nj = 0.0;              // per presentation
  double lfsr_area_um2 = 0.0;
  double mram_energy_nj = 0.0;
  double mram_area_um2 = 0.0;
  double mult8_pj = 0.0;
  double add8_pj = 0.0;

  static CostModel calibrate(const CalibrationTargets& targets);
  static CostModel defaults();

  double cell_area(int bits) const;
  double cell_energy(int bits) const;
  double word_cycles(int bits) const;
  double rng_energy_nj(RngHardware rng) const;
  double rng_area_mm2(RngHardware rng) const;

  // Throws InvalidConfig for non-positive or non-finite entries.
  void validate() const;

  // key = value lines, '#' comments; unknown keys throw InvalidConfig.
  void apply_config(std::string_view text);
  std::string to_config() const;
};

CostModel load_cost_model(const std::string& path);

struct EnergyBreakdown {
  double cells_nj = 0.0;
  double popcount_trees_nj = 0.0;
  double registers_nj = 0.0;
  double rng_nj = 0.0;

  double total() const noexcept { return cells_nj + popcount_trees_nj + registers_nj + rng_nj; }
};

struct LayerPlacement {
  std::size_t neurons = 0;
  std::size_t fan_in = 0;
  std::size_t words_per_neuron = 0;
  std::size_t first_word = 0;  // global 32-bit word address
  std::size_t first_cell = 0;
  std::size_t last_cell = 0;   // inclusive
  std::size_t max_words_per_cell = 0;

  std::size_t words() const noexcept { return neurons * words_per_neuron; }
};

struct Placement {
  CellGridConfig grid;
  BnnModel model;
  std::vector<LayerPlacement> layers;

  bool empty() const noexcept { return layers.empty(); }
  std::size_t words_used() const noexcept;
  std::size_t cells_used() const noexcept;
};

// Word-level layout for a shape {input, hidden..., output}.
// Throws LayerTooWide or GridCapacityExceeded.
std::vector<LayerPlacement> layout_shape(std::span<const std::size_t> shape,
                                         const CellGridConfig& grid);
Placement map_model(const BnnModel& model, const CellGridConfig& grid = {});

struct SimReport {
  std::size_t predicted = 0;
  std::uint64_t cycles = 0;
  std::vector<std::uint64_t> layer_cycles;
  std::uint64_t word_ops = 0;
  std::uint64_t compares = 0;
  std::uint64_t rng_cycles = 0;
  EnergyBreakdown energy;
  double area_mm2 = 0.0;
};

// Runs the datapath on T = presentations.size() binary inputs, accumulating
// first-layer popcounts over presentations in the cell registers.
SimReport simulate_inference(const Placement& placement, std::span<const BitVector> presentations,
                             const CostModel& cost = CostModel::defaults(),
                             RngHardware rng = RngHardware::Lfsr8);

double estimate_area(std::span<const std::size_t> shape, int first_layer_bits, RngHardware rng,
                     const CostModel& cost = CostModel::defaults(),
                     const CellGridConfig& grid = {});

// Energy per image; `presentations` is ignored for a multi-bit first layer.
EnergyBreakdown estimate_energy(std::span<const std::size_t> shape, int presentations,
                                int first_layer_bits, RngHardware rng,
                                const CostModel& cost = CostModel::defaults(),
                                const CellGridConfig& grid = {});

// Arithmetic-only energy (nJ) of an 8-bit dense network: one multiply and
// one add per weight.
double compare_nonbinarized(std::span<const std::size_t> shape,
                            const CostModel& cost = CostModel::defaults());

std::string sim_report_csv_header();
std::string sim_report_csv_row(const SimReport& r);
std::string format_sim_report(const SimReport& r);

}  // namespace sbnn
