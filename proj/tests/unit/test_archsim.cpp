#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sbnn/archsim.hpp"
#include "sbnn/errors.hpp"
#include "sbnn/random.hpp"
#include "test_support.hpp"

using namespace sbnn;

namespace {

const std::vector<std::size_t> kFashion{784, 1024, 1024, 10};

template <class F>
void expect_code(F f, ErrorCode code) {
  try {
    f();
    ADD_FAILURE() << "no exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

double stoch_total(int t, RngHardware rng = RngHardware::Lfsr8) {
  return estimate_energy(kFashion, t, 1, rng).total();
}

double conv_total() { return estimate_energy(kFashion, 1, 8, RngHardware::Lfsr8).total(); }

}  // namespace

TEST(Layout, FashionNetworkFits) {
  const CellGridConfig grid;
  EXPECT_EQ(grid.cells(), 1024u);
  EXPECT_EQ(grid.capacity_words() * 32, 32u * 32u * 2048u);
  const auto l = layout_shape(kFashion, grid);
  ASSERT_EQ(l.size(), 3u);
  // ceil(784/32) = 25, ceil(1024/32) = 32 words per row.
  EXPECT_EQ(l[0].words(), 1024u * 25u);
  EXPECT_EQ(l[1].words(), 1024u * 32u);
  EXPECT_EQ(l[2].words(), 10u * 32u);
  EXPECT_EQ(l[0].first_cell, 0u);
  EXPECT_EQ(l[0].last_cell, 399u);  // 25,600 words / 64 per cell
  EXPECT_EQ(l[0].max_words_per_cell, 64u);
  EXPECT_EQ(l[1].first_word, 25600u);
  EXPECT_EQ(l[2].max_words_per_cell, 64u);  // 320 words starting on a cell boundary
  EXPECT_LE((784u * 1024 + 1024u * 1024 + 1024u * 10), grid.capacity_words() * 32);
}

TEST(Layout, WidthAndCapacityLimits) {
  expect_code([] { layout_shape(std::vector<std::size_t>{16, 1025, 10}, CellGridConfig{}); },
              ErrorCode::LayerTooWide);
  EXPECT_NO_THROW(layout_shape(std::vector<std::size_t>{16, 1024, 10}, CellGridConfig{}));
  expect_code(
      [] { layout_shape(std::vector<std::size_t>{784, 1024, 1024, 1024, 10}, CellGridConfig{}); },
      ErrorCode::GridCapacityExceeded);
  CellGridConfig bad;
  bad.operating_bits = 3;
  expect_code([&] { bad.validate(); }, ErrorCode::InvalidConfig);
}

TEST(Layout, EmptyModel) {
  const Placement p = map_model(BnnModel{});
  EXPECT_TRUE(p.empty());
  EXPECT_EQ(p.words_used(), 0u);
  EXPECT_EQ(p.cells_used(), 0u);
  const SimReport r = simulate_inference(p, {});
  EXPECT_EQ(r.cycles, 0u);
  EXPECT_EQ(r.energy.total(), 0.0);
}

TEST(Simulator, MatchesFunctionalModel) {
  std::mt19937_64 gen(21);
  int trials = 0;
  for (int m = 0; m < 10; ++m) {
    const std::size_t in = 20 + gen() % 120;
    std::vector<std::size_t> sizes{in};
    const std::size_t hidden = gen() % 3;
    for (std::size_t h = 0; h < hidden; ++h) sizes.push_back(8 + gen() % 90);
    sizes.push_back(2 + gen() % 9);
    const BnnModel model = test::random_model(gen, sizes);
    const Placement p = map_model(model);
    for (int k = 0; k < 10; ++k, ++trials) {
      const auto x = test::random_image(gen, in);
      StochasticConfig cfg;
      cfg.presentations = 1 + static_cast<int>(gen() % 12);
      cfg.rng = (k % 2) ? RngKind::Lfsr8 : RngKind::Counter64;
      cfg.seed = gen();
      const PixelSampler rng(cfg);
      const auto pres = sample_presentations(x, cfg.presentations, rng);
      const SimReport r = simulate_inference(p, pres);
      EXPECT_EQ(r.predicted, infer_stochastic(model, x, cfg, rng));
      EXPECT_EQ(r.predicted, infer_presentations(model, pres, 1));
    }
  }
  EXPECT_EQ(trials, 100);
}

TEST(Simulator, FirstLayerCyclesLinearInPresentations) {
  std::mt19937_64 gen(22);
  const BnnModel model = test::random_model(gen, {300, 200, 100, 10});
  const Placement p = map_model(model);
  const auto x = test::random_image(gen, 300);
  const PixelSampler rng(RngKind::Counter64, 5);
  const SimReport one = simulate_inference(p, sample_presentations(x, 1, rng));
  for (int t : {2, 4, 7, 16}) {
    const SimReport r = simulate_inference(p, sample_presentations(x, t, rng));
    EXPECT_EQ(r.layer_cycles[0], static_cast<std::uint64_t>(t) * one.layer_cycles[0]);
    EXPECT_EQ(r.layer_cycles[1], one.layer_cycles[1]);
    EXPECT_EQ(r.layer_cycles[2], one.layer_cycles[2]);
    EXPECT_EQ(r.rng_cycles, static_cast<std::uint64_t>(t));
    // Doubling T only touches first-layer and RNG terms.
    EXPECT_DOUBLE_EQ(r.energy.rng_nj, t * one.energy.rng_nj);
  }
  EXPECT_EQ(one.cycles, one.layer_cycles[0] + one.layer_cycles[1] + one.layer_cycles[2]);
}

TEST(Simulator, EnergyMatchesEstimateAndBreakdownSums) {
  std::mt19937_64 gen(23);
  const BnnModel model = test::random_model(gen, {784, 128, 128, 10});
  for (auto mode : {AccumulationMode::SeqToPar, AccumulationMode::ParToSeq}) {
    CellGridConfig grid;
    grid.mode = mode;
    const Placement p = map_model(model, grid);
    const auto x = test::random_image(gen, 784);
    for (int t : {1, 3, 8}) {
      const auto pres = sample_presentations(x, t, PixelSampler(RngKind::Lfsr8, 9));
      const SimReport r = simulate_inference(p, pres, CostModel::defaults(), RngHardware::MramTrng);
      const auto e = estimate_energy(model.layer_sizes(), t, 1, RngHardware::MramTrng,
                                     CostModel::defaults(), grid);
      EXPECT_NEAR(r.energy.total(), e.total(), 1e-9 * e.total());
      EXPECT_NEAR(r.energy.total(), r.energy.cells_nj + r.energy.popcount_trees_nj +
                                        r.energy.registers_nj + r.energy.rng_nj,
                  1e-12);
      EXPECT_NEAR(r.energy.rng_nj, 0.125 * t, 1e-12);
      if (mode == AccumulationMode::SeqToPar) {
        EXPECT_EQ(r.energy.popcount_trees_nj, 0.0);
      } else {
        EXPECT_GT(r.energy.popcount_trees_nj, 0.0);
      }
    }
  }
}

TEST(Simulator, AccumulationModeOnlyMovesEnergy) {
  std::mt19937_64 gen(24);
  const BnnModel model = test::random_model(gen, {100, 50, 10});
  CellGridConfig a, b;
  b.mode = AccumulationMode::ParToSeq;
  const auto x = test::random_image(gen, 100);
  const auto pres = sample_presentations(x, 5, PixelSampler(RngKind::Counter64, 1));
  const SimReport ra = simulate_inference(map_model(model, a), pres);
  const SimReport rb = simulate_inference(map_model(model, b), pres);
  EXPECT_EQ(ra.predicted, rb.predicted);
  EXPECT_EQ(ra.cycles, rb.cycles);
  EXPECT_NEAR(ra.energy.total(), rb.energy.total(), 1e-12);
  EXPECT_EQ(ra.energy.cells_nj, rb.energy.cells_nj);
}

TEST(Simulator, WidthMismatch) {
  std::mt19937_64 gen(25);
  const Placement p = map_model(test::random_model(gen, {40, 10}));
  const std::vector<BitVector> pres{BitVector(39)};
  expect_code([&] { simulate_inference(p, pres); }, ErrorCode::DimensionMismatch);
}

TEST(CostCalibration, AreaPoints) {
  const double bin = estimate_area(kFashion, 1, RngHardware::Lfsr8);
  const double conv = estimate_area(kFashion, 8, RngHardware::Lfsr8);
  EXPECT_NEAR(bin, 0.73, 0.02 * 0.73);
  EXPECT_NEAR(conv, 1.95, 0.02 * 1.95);
  EXPECT_NEAR(100.0 * (1.0 - bin / conv), 62.0, 1.0);
  const CostModel& c = CostModel::defaults();
  EXPECT_NEAR(c.cell_area(8) / c.cell_area(1), 6.0, 0.3);
  EXPECT_NEAR(c.cell_energy(8) / c.cell_energy(1), 4.5, 0.225);
  // Intermediate widths lie between the extremes.
  for (int b : {2, 4}) {
    EXPECT_GT(c.cell_area(b), c.cell_area(b / 2));
    EXPECT_LT(c.cell_area(b), c.cell_area(8));
    EXPECT_GT(c.cell_energy(b), c.cell_energy(b / 2));
  }
  // The MRAM generator adds no area; the LFSR bank adds 48,000 um2.
  EXPECT_NEAR(bin - estimate_area(kFashion, 1, RngHardware::MramTrng), 0.048, 1e-12);
}

TEST(CostCalibration, EnergyPoints) {
  // e_conv = 2.1 * 90, e_bin = (e_conv - 90) / (8 - 3), e_base = 90 - 3 e_bin.
  const double e_conv = 2.1 * 90.0;
  const double e_bin = (e_conv - 90.0) / 5.0;
  const double e_base = 90.0 - 3.0 * e_bin;
  EXPECT_NEAR(conv_total(), e_conv, 1e-9);
  const double s3 = stoch_total(3);
  EXPECT_NEAR(s3, e_base + 3 * e_bin + 3 * 0.52, 1e-9);
  EXPECT_NEAR(s3, 90.0, 0.05 * 90.0);
  EXPECT_NEAR(conv_total() / s3, 2.1, 0.1);
  int crossover = 0;
  for (int t = 1; t <= 64 && crossover == 0; ++t) {
    if (stoch_total(t) >= conv_total()) crossover = t;
  }
  EXPECT_EQ(crossover, 8);
  for (int t = 1; t <= 8; ++t) {
    const auto e = estimate_energy(kFashion, t, 1, RngHardware::Lfsr8);
    EXPECT_LT(e.rng_nj / e.total(), 0.05) << "T = " << t;
    EXPECT_NEAR(e.total(), e_base + t * (e_bin + 0.52), 1e-9);
  }
}

TEST(CostCalibration, NonBinarizedComparison) {
  const std::vector<std::size_t> ref{784, 500, 500, 10};
  const double expected = (784.0 * 500 + 500.0 * 500 + 500.0 * 10) * 0.34e-3;
  EXPECT_NEAR(compare_nonbinarized(ref), expected, 1e-9);
  EXPECT_NEAR(compare_nonbinarized(ref), 220.0, 22.0);
  EXPECT_EQ(compare_nonbinarized(std::vector<std::size_t>{784}), 0.0);
  EXPECT_NEAR(compare_nonbinarized(std::vector<std::size_t>{1, 1}) * 1e3, 0.34, 1e-12);
}

TEST(CostModelConfig, RoundTripAndOverrides) {
  const CostModel d = CostModel::defaults();
  CostModel m;
  m.apply_config(d.to_config());
  EXPECT_EQ(m.to_config(), d.to_config());
  EXPECT_NEAR(m.cell_area(4), d.cell_area(4), 1e-9 * d.cell_area(4));

  CostModel o = d;
  o.apply_config("# comment\n\nlfsr_energy_nj = 1.5   \n  mult8_pj=0.5 # trailing\n");
  EXPECT_EQ(o.lfsr_energy_nj, 1.5);
  EXPECT_EQ(o.mult8_pj, 0.5);
  EXPECT_EQ(o.cell_energy(1), d.cell_energy(1));
  EXPECT_NEAR(estimate_energy(kFashion, 2, 1, RngHardware::Lfsr8, o).rng_nj, 3.0, 1e-12);

  for (const char* bad : {"no_such_key = 1", "lfsr_energy_nj", "lfsr_energy_nj = abc",
                          "cell_area_um2_1bit = -2", "accumulate_fraction = 1.5"}) {
    CostModel b = d;
    expect_code([&] { b.apply_config(bad); }, ErrorCode::InvalidConfig);
  }
}

TEST(CostModelConfig, NamesParse) {
  EXPECT_EQ(parse_rng_hardware("mram"), RngHardware::MramTrng);
  EXPECT_EQ(parse_rng_hardware("lfsr8"), RngHardware::Lfsr8);
  EXPECT_EQ(parse_accumulation_mode("par-to-seq"), AccumulationMode::ParToSeq);
  expect_code([] { parse_rng_hardware("trng"); }, ErrorCode::InvalidConfig);
  expect_code([] { parse_accumulation_mode("both"); }, ErrorCode::InvalidConfig);
}

TEST(SimReportFormat, CsvColumnsMatchHeader) {
  std::mt19937_64 gen(26);
  const BnnModel model = test::random_model(gen, {64, 10});
  const auto x = test::random_image(gen, 64);
  const auto r = simulate_inference(map_model(model),
                                    sample_presentations(x, 2, PixelSampler(RngKind::Lfsr8, 3)));
  const auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(commas(sim_report_csv_header()), commas(sim_report_csv_row(r)));
  EXPECT_NE(format_sim_report(r).find("area"), std::string::npos);
}
