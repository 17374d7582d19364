#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace sbnn {

// One experiment, as given by flags and/or a key = value spec file.
struct ExperimentSpec {
  std::string command;  // train, eval, sweep-t, simulate, cost, encode-preview

  std::string train_images, train_labels, test_images, test_labels;
  std::string model;
  std::string out;
  std::string log;          // train: log CSV (default <out>.log.csv)
  std::string cost_config;  // key = value CostModel overrides

  int t = 1;
  int accumulate_at = 1;
  std::string input_mode = "grayscale";
  std::string rng = "counter64";
  std::optional<std::uint64_t> seed;

  int epochs = 20;
  std::size_t batch = 100;
  double lr = 1e-3;
  double dropout = 0.2;
  double momentum = 0.9;
  double bn_eps = 1e-5;
  std::string hidden = "128,128";

  int seeds = 3;           // sweep-t repetitions per T
  std::size_t limit = 0;   // 0 = whole test set (simulate defaults to 10)
  std::size_t index = 0;   // encode-preview image
  std::string rng_hw = "lfsr8";
  std::string accumulation_mode = "seq-to-par";
  std::string shape = "784,1024,1024,10";
  int t_max = 16;
  bool pretty = false;
};

// Executes a parsed spec. 0 on success, 1 on runtime failure, 2 on bad usage.
int run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

// Parses argv (subcommand first) and runs it.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sbnn
