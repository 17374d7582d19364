#include "sbnn/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sbnn/archsim.hpp"
#include "sbnn/dataio.hpp"
#include "sbnn/errors.hpp"
#include "sbnn/parallel.hpp"
#include "sbnn/random.hpp"
#include "sbnn/training.hpp"

namespace sbnn {

namespace {

constexpr int kSweepGrid[] = {1, 2, 3, 5, 8, 16, 32, 64, 100};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

std::uint64_t require_seed(const ExperimentSpec& s) {
  require(s.seed.has_value(), s.command + " needs --seed");
  return *s.seed;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
      n = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == item.size(), "'" + text + "' is not a comma-separated list of sizes");
    v.push_back(static_cast<std::size_t>(n));
  }
  return v;
}

// Comment row recording everything needed to rerun the experiment.
std::string spec_comment(const ExperimentSpec& s) {
  std::ostringstream c;
  c << "# sbnn " << s.command;
  const auto kv = [&](const char* k, const auto& v) { c << ' ' << k << '=' << v; };
  if (!s.train_images.empty()) kv("train-images", s.train_images);
  if (!s.train_labels.empty()) kv("train-labels", s.train_labels);
  if (!s.test_images.empty()) kv("test-images", s.test_images);
  if (!s.test_labels.empty()) kv("test-labels", s.test_labels);
  if (!s.model.empty()) kv("model", s.model);
  if (!s.cost_config.empty()) kv("cost-config", s.cost_config);
  kv("t", s.t);
  kv("accumulate-at", s.accumulate_at);
  kv("input-mode", s.input_mode);
  kv("rng", s.rng);
  if (s.command == "train") {
    kv("epochs", s.epochs);
    kv("batch", s.batch);
    kv("lr", s.lr);
    kv("dropout", s.dropout);
    kv("momentum", s.momentum);
    kv("bn-eps", s.bn_eps);
    kv("hidden", s.hidden);
  }
  if (s.command == "sweep-t") kv("seeds", s.seeds);
  if (s.command == "simulate" || s.command == "cost") {
    kv("rng-hw", s.rng_hw);
    kv("accumulation-mode", s.accumulation_mode);
  }
  if (s.command == "cost") {
    kv("shape", s.shape);
    kv("t-max", s.t_max);
  }
  if (s.command == "encode-preview") kv("index", s.index);
  kv("limit", s.limit);
  c << " seed=" << (s.seed ? std::to_string(*s.seed) : std::string("none"));
  return c.str();
}

// Writes a CSV (comment row, header, rows) to `path`, or to `fallback` if empty.
void emit_csv(const std::string& path, std::ostream& fallback, const ExperimentSpec& spec,
              const std::string& header, const std::function<void(std::ostream&)>& rows) {
  std::ostringstream body;
  body.precision(10);
  body << spec_comment(spec) << '\n' << header << '\n';
  rows(body);
  if (path.empty()) {
    fallback << body.str();
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::IoError, "cannot write " + path);
  f << body.str();
  if (!f) fail(ErrorCode::IoError, "write failed for " + path);
}

Dataset load_test(const ExperimentSpec& s) {
  require(!s.test_images.empty() && !s.test_labels.empty(),
          s.command + " needs --test-images and --test-labels");
  Dataset d = load_idx(s.test_images, s.test_labels);
  return s.limit > 0 ? d.head(s.limit) : d;
}

BnnModel load_spec_model(const ExperimentSpec& s) {
  require(!s.model.empty(), s.command + " needs --model");
  return load_model_file(s.model);
}

CostModel spec_cost(const ExperimentSpec& s) {
  return s.cost_config.empty() ? CostModel::defaults() : load_cost_model(s.cost_config);
}

int run_train(const ExperimentSpec& s, std::ostream& out, std::ostream& err) {
  require(!s.train_images.empty() && !s.train_labels.empty(),
          "train needs --train-images and --train-labels");
  require(!s.out.empty(), "train needs --out for the model file");
  TrainConfig cfg;
  cfg.seed = require_seed(s);
  cfg.epochs = s.epochs;
  cfg.batch_size = s.batch;
  cfg.adam.lr = s.lr;
  cfg.dropout = s.dropout;
  cfg.bn_momentum = s.momentum;
  cfg.bn_eps = s.bn_eps;
  cfg.input_mode = parse_input_mode(s.input_mode);
  cfg.presentations = s.t;
  cfg.rng = parse_rng_kind(s.rng);
  cfg.validate();

  const Dataset train_set = load_idx(s.train_images, s.train_labels);
  std::optional<Dataset> test_set;
  if (!s.test_images.empty() || !s.test_labels.empty()) test_set = load_test(s);
  require(train_set.size() > 0, "training set is empty");

  int classes = 0;
  for (int l : train_set.labels) classes = std::max(classes, l + 1);
  std::vector<std::size_t> sizes{train_set.dim()};
  for (std::size_t h : parse_sizes(s.hidden)) sizes.push_back(h);
  sizes.push_back(static_cast<std::size_t>(std::max(classes, 2)));

  TrainState state = init_train_state(sizes, cfg.seed);
  const auto result = train(state, train_set, test_set ? &*test_set : nullptr, cfg,
                            [&](const EpochLog& e) {
                              err << "epoch " << e.epoch << " loss " << e.loss << " train "
                                  << e.train_acc << " test " << e.test_acc << '\n';
                            });
  save_model_file(result.model, s.out);
  write_file(s.out + ".state", save_train_state(state));
  const std::string log_path = s.log.empty() ? s.out + ".log.csv" : s.log;
  emit_csv(log_path, out, s, "epoch,train_acc,test_acc,loss", [&](std::ostream& o) {
    for (const auto& e : result.log) {
      o << e.epoch << ',' << e.train_acc << ',';
      if (std::isnan(e.test_acc)) {
        o << "";
      } else {
        o << e.test_acc;
      }
      o << ',' << e.loss << '\n';
    }
  });
  out << "model " << s.out << '\n';
  return 0;
}

StochasticConfig stochastic_config(const ExperimentSpec& s, std::uint64_t seed, int t) {
  StochasticConfig cfg;
  cfg.presentations = t;
  cfg.rng = parse_rng_kind(s.rng);
  cfg.seed = seed;
  cfg.accumulation_layer = s.accumulate_at;
  return cfg;
}

int run_eval(const ExperimentSpec& s, std::ostream& out) {
  const BnnModel model = load_spec_model(s);
  const Dataset test = load_test(s);
  const InputMode mode = parse_input_mode(s.input_mode);
  double acc = 0.0;
  if (mode == InputMode::Stochastic) {
    const auto cfg = stochastic_config(s, require_seed(s), s.t);
    cfg.validate(model.depth());
    acc = accuracy(predict_stochastic(model, test, cfg), test.labels);
  } else {
    acc = evaluate_for_mode(model, test, mode, 1, RngKind::Counter64, 0);
  }
  if (!s.out.empty()) {
    emit_csv(s.out, out, s, "input_mode,t,accumulate_at,images,accuracy", [&](std::ostream& o) {
      o << s.input_mode << ',' << (mode == InputMode::Stochastic ? s.t : 0) << ','
        << s.accumulate_at << ',' << test.size() << ',' << acc << '\n';
    });
  }
  out << "accuracy " << acc << '\n';
  return 0;
}

int run_sweep(const ExperimentSpec& s, std::ostream& out) {
  const BnnModel model = load_spec_model(s);
  const Dataset test = load_test(s);
  const std::uint64_t seed = require_seed(s);
  require(s.seeds >= 1, "sweep-t needs --seeds >= 1");
  emit_csv(s.out, out, s, "t,accumulate_at,seeds,mean_accuracy,std_accuracy", [&](std::ostream& o) {
    for (int t : kSweepGrid) {
      std::vector<double> accs;
      for (int r = 0; r < s.seeds; ++r) {
        const auto cfg = stochastic_config(
            s, derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)), static_cast<std::uint64_t>(r)), t);
        cfg.validate(model.depth());
        accs.push_back(accuracy(predict_stochastic(model, test, cfg), test.labels));
      }
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      const double sd = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
      o << t << ',' << s.accumulate_at << ',' << s.seeds << ',' << mean << ',' << sd << '\n';
    }
  });
  return 0;
}

int run_simulate(const ExperimentSpec& s, std::ostream& out) {
  ExperimentSpec spec = s;
  if (spec.limit == 0) spec.limit = 10;
  const BnnModel model = load_spec_model(spec);
  const Dataset test = load_test(spec);
  const std::uint64_t seed = require_seed(spec);
  CellGridConfig grid;
  grid.mode = parse_accumulation_mode(spec.accumulation_mode);
  const Placement placement = map_model(model, grid);
  const CostModel cost = spec_cost(spec);
  const RngHardware hw = parse_rng_hardware(spec.rng_hw);
  const PixelSampler rng(parse_rng_kind(spec.rng), seed);
  StochasticConfig cfg = stochastic_config(spec, seed, spec.t);
  cfg.accumulation_layer = 1;
  cfg.validate(model.depth());

  std::vector<SimReport> reports;
  std::vector<std::size_t> functional;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const PixelSampler image_rng = rng.fork(i);
    const auto x = test.image(i);
    reports.push_back(simulate_inference(placement, sample_presentations(x, spec.t, image_rng), cost, hw));
    functional.push_back(infer_stochastic(model, x, cfg, image_rng));
  }
  emit_csv(spec.out, out, spec, "index,label,t," + sim_report_csv_header() + ",functional_class",
           [&](std::ostream& o) {
             for (std::size_t i = 0; i < reports.size(); ++i) {
               o << i << ',' << test.labels[i] << ',' << spec.t << ','
                 << sim_report_csv_row(reports[i]) << ',' << functional[i] << '\n';
             }
           });
  if (spec.pretty) {
    for (std::size_t i = 0; i < reports.size(); ++i) {
      out << "image " << i << " (label " << test.labels[i] << ")\n" << format_sim_report(reports[i]);
    }
  }
  return 0;
}

int run_cost(const ExperimentSpec& s, std::ostream& out, std::ostream& err) {
  const auto shape = parse_sizes(s.shape);
  require(s.t_max >= 1, "cost needs --t-max >= 1");
  const CostModel cost = spec_cost(s);
  CellGridConfig grid;
  grid.mode = parse_accumulation_mode(s.accumulation_mode);
  const EnergyBreakdown conv = estimate_energy(shape, 1, 8, RngHardware::Lfsr8, cost, grid);
  const double area8 = estimate_area(shape, 8, RngHardware::Lfsr8, cost, grid);

  const auto row = [](std::ostream& o, int bits, std::string_view rng, int t, const EnergyBreakdown& e,
                      double area, double conv_total) {
    o << bits << ',' << rng << ',' << t << ',' << e.cells_nj << ',' << e.popcount_trees_nj << ','
      << e.registers_nj << ',' << e.rng_nj << ',' << e.total() << ',' << area << ','
      << conv_total / e.total() << '\n';
  };
  emit_csv(s.out, out, s,
           "first_layer_bits,rng,t,cells_nj,popcount_trees_nj,registers_nj,rng_nj,total_nj,area_mm2,"
           "conv_over_this",
           [&](std::ostream& o) {
             row(o, 8, "none", 0, conv, area8, conv.total());
             for (RngHardware hw : {RngHardware::Lfsr8, RngHardware::MramTrng}) {
               const double area = estimate_area(shape, 1, hw, cost, grid);
               for (int t = 1; t <= s.t_max; ++t) {
                 row(o, 1, to_string(hw), t, estimate_energy(shape, t, 1, hw, cost, grid), area,
                     conv.total());
               }
             }
           });

  std::ostream& summary = s.out.empty() ? err : out;
  const double area1 = estimate_area(shape, 1, RngHardware::Lfsr8, cost, grid);
  int crossover = 0;
  for (int t = 1; t <= 1000 && crossover == 0; ++t) {
    if (estimate_energy(shape, t, 1, RngHardware::Lfsr8, cost, grid).total() >= conv.total()) crossover = t;
  }
  const double e3 = estimate_energy(shape, 3, 1, RngHardware::Lfsr8, cost, grid).total();
  summary << "area binary first layer (mm2)  " << area1 << '\n'
          << "area 8-bit first layer (mm2)   " << area8 << '\n'
          << "area saving                    " << 100.0 * (1.0 - area1 / area8) << "%\n"
          << "energy 8-bit first layer (nJ)  " << conv.total() << '\n'
          << "energy stochastic T=3 (nJ)     " << e3 << '\n'
          << "factor at T=3                  " << conv.total() / e3 << '\n'
          << "crossover T                    " << crossover << '\n'
          << "8-bit non-binarized 784-500-500-10 arithmetic (nJ)  "
          << compare_nonbinarized(std::vector<std::size_t>{784, 500, 500, 10}, cost) << '\n';
  return 0;
}

int run_encode_preview(const ExperimentSpec& s, std::ostream& out) {
  const Dataset test = load_test(s);
  require(s.index < test.size(), "--index is past the end of the dataset");
  require(s.t >= 1, "encode-preview needs --t >= 1");
  const PixelSampler rng = PixelSampler(parse_rng_kind(s.rng), require_seed(s)).fork(s.index);
  const auto presentations = sample_presentations(test.image(s.index), s.t, rng);
  emit_csv(s.out, out, s, "presentation,row,bits", [&](std::ostream& o) {
    for (std::size_t t = 0; t < presentations.size(); ++t) {
      for (std::size_t r = 0; r < test.rows; ++r) {
        o << t << ',' << r << ',';
        for (std::size_t c = 0; c < test.cols; ++c) o << (presentations[t].bit(r * test.cols + c) ? '1' : '0');
        o << '\n';
      }
    }
  });
  return 0;
}

void add_options(CLI::App& app, ExperimentSpec& s) {
  app.add_option("--train-images", s.train_images, "IDX image file for training (gzip ok)");
  app.add_option("--train-labels", s.train_labels, "IDX label file for training");
  app.add_option("--test-images", s.test_images, "IDX image file for evaluation");
  app.add_option("--test-labels", s.test_labels, "IDX label file for evaluation");
  app.add_option("--model", s.model, "SBNN model file");
  app.add_option("--out", s.out, "output path (model for train, CSV otherwise)");
  app.add_option("--log", s.log, "training log CSV (default <out>.log.csv)");
  app.add_option("--cost-config", s.cost_config, "key = value cost model overrides");
  app.add_option("--t", s.t, "stochastic presentations T")->check(CLI::PositiveNumber);
  app.add_option("--accumulate-at", s.accumulate_at, "layer (1-based) summed over presentations")
      ->check(CLI::PositiveNumber);
  app.add_option("--input-mode", s.input_mode, "grayscale, stochastic or bw")
      ->check(CLI::IsMember({"grayscale", "stochastic", "bw"}));
  app.add_option("--rng", s.rng, "lfsr8, counter64 or os")
      ->check(CLI::IsMember({"lfsr8", "counter64", "os"}));
  app.add_option("--seed", s.seed, "seed for every random choice");
  app.add_option("--epochs", s.epochs, "training epochs")->check(CLI::NonNegativeNumber);
  app.add_option("--batch", s.batch, "mini-batch size")->check(CLI::PositiveNumber);
  app.add_option("--lr", s.lr, "Adam learning rate");
  app.add_option("--dropout", s.dropout, "dropout on hidden activations");
  app.add_option("--momentum", s.momentum, "batch-norm running-average momentum");
  app.add_option("--bn-eps", s.bn_eps, "batch-norm epsilon");
  app.add_option("--hidden", s.hidden, "hidden layer widths, comma separated");
  app.add_option("--seeds", s.seeds, "sweep-t repetitions per T")->check(CLI::PositiveNumber);
  app.add_option("--limit", s.limit, "use only the first N test images");
  app.add_option("--index", s.index, "encode-preview image index");
  app.add_option("--rng-hw", s.rng_hw, "generator costed by simulate/cost: lfsr8 or mram")
      ->check(CLI::IsMember({"lfsr8", "mram"}));
  app.add_option("--accumulation-mode", s.accumulation_mode, "seq-to-par or par-to-seq")
      ->check(CLI::IsMember({"seq-to-par", "par-to-seq"}));
  app.add_option("--shape", s.shape, "cost: network sizes, comma separated");
  app.add_option("--t-max", s.t_max, "cost: largest T tabulated");
  app.add_flag("--pretty", s.pretty, "simulate: also print readable reports");
}

}  // namespace

int run(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
  try {
    configure_threads_from_env();
    if (spec.command == "train") return run_train(spec, out, err);
    if (spec.command == "eval") return run_eval(spec, out);
    if (spec.command == "sweep-t") return run_sweep(spec, out);
    if (spec.command == "simulate") return run_simulate(spec, out);
    if (spec.command == "cost") return run_cost(spec, out, err);
    if (spec.command == "encode-preview") return run_encode_preview(spec, out);
    err << "error: unknown subcommand '" << spec.command << "'\n";
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::InvalidConfig ? 2 : 1;
  }
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic-input binarized neural networks: training, inference and hardware cost"};
  app.name("sbnn");
  ExperimentSpec spec;
  add_options(app, spec);
  app.set_config("--config", "", "key = value experiment spec file");
  app.require_subcommand(1, 1);
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train a model and write it with its log"},
      {"eval", "accuracy of a model on a test set"},
      {"sweep-t", "stochastic accuracy over T = 1..100, mean and std over seeds"},
      {"simulate", "run the accelerator model on test images"},
      {"cost", "area and energy table for 1- and 8-bit first layers"},
      {"encode-preview", "dump sampled binary presentations of one image"},
  };
  for (const auto& [name, desc] : commands) {
    app.add_subcommand(name, desc)->fallthrough();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  spec.command = app.get_subcommands().front()->get_name();
  return run(spec, out, err);
}

}  // namespace sbnn
