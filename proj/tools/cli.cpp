#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "calibkit/data.hpp"
#include "calibkit/error.hpp"
#include "calibkit/losses.hpp"
#include "calibkit/metrics.hpp"
#include "calibkit/model.hpp"
#include "calibkit/posthoc.hpp"
#include "json.hpp"

namespace calibkit::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------ helpers

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream field(item);
    T value{};
    field >> value;
    require(!field.fail() && field.eof(), std::string(flag) + ": bad list entry '" + item + "'");
    out.push_back(value);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open " + path.string() + " for writing");
  out << text;
  require(static_cast<bool>(out), "write to " + path.string() + " failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sibling(const fs::path& primary, const std::string& suffix) {
  return fs::path(primary.string() + suffix);
}

json report_json(const CalibrationReport& r) {
  return json{{"schema", "calibkit/report/v1"},
              {"ece", r.ece},
              {"sce", r.sce},
              {"mce", r.mce},
              {"class_ece", r.class_ece},
              {"accuracy", r.accuracy},
              {"mean_confidence", r.mean_confidence},
              {"m", r.m},
              {"n", r.n},
              {"k", r.k}};
}

/// Every option of `sub` with its parsed (or default) value.
json option_map(const CLI::App* sub) {
  json args = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    std::string name = opt->get_name();
    while (!name.empty() && name.front() == '-') name.erase(name.begin());
    if (opt->count() > 0) {
      const auto& results = opt->results();
      if (results.size() == 1)
        args[name] = results.front();
      else
        args[name] = results;
    } else if (!opt->get_default_str().empty()) {
      args[name] = opt->get_default_str();
    }
  }
  return args;
}

void write_manifest(const fs::path& primary, const CLI::App* sub, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  json doc{{"schema", "calibkit/manifest/v1"},
           {"command", sub->get_name()},
           {"args", option_map(sub)},
           {"seed", seed},
           {"version", kVersion},
           {"outputs", outputs}};
  write_text(sibling(primary, ".manifest.json"), doc.dump(2) + "\n");
}

// Prediction source: either a JSONL log or a model applied to a dataset.
struct Predictions {
  std::optional<PredictionLog> log;
  std::optional<Matrix> logits;
};

Predictions predictions_from(const std::string& log_path, const std::string& model_path,
                             const std::string& data_path, const char* role) {
  const bool have_log = !log_path.empty();
  const bool have_model = !model_path.empty() || !data_path.empty();
  require(have_log != have_model, std::string(role) +
                                      ": give exactly one of a prediction log or a model with a "
                                      "dataset");
  Predictions out;
  if (have_log) {
    auto loaded = load_prediction_log_jsonl(log_path);
    out.log.emplace(std::move(loaded.log));
    out.logits = std::move(loaded.logits);
    return out;
  }
  require(!model_path.empty() && !data_path.empty(),
          std::string(role) + ": a model needs a dataset and vice versa");
  const MlpModel model = model_from_json(read_text(model_path));
  const LabeledDataset ds = load_dataset_csv(data_path);
  require(ds.k <= model.output_dim(), std::string(role) + ": dataset has more classes than the model");
  Matrix logits = forward(model, ds.features);
  out.log.emplace(softmax_rows(logits), ds.labels);
  out.logits = std::move(logits);
  return out;
}

// ----------------------------------------------------------- training

struct TrainFlags {
  std::string loss = "nll";
  double alpha = 0.1;
  double gamma = 1.0;
  std::string aux = "none";
  double beta = 1.0;
  std::string hidden = "32";
  std::size_t epochs = 40;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  std::string milestones;
  double lr_decay = 0.1;
  double val_fraction = 0.1;

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.lr = lr;
    cfg.momentum = momentum;
    cfg.weight_decay = weight_decay;
    cfg.lr_milestones = parse_list<std::size_t>(milestones, "--milestones");
    cfg.lr_decay = lr_decay;
    cfg.val_fraction = val_fraction;
    cfg.seed = seed;
    cfg.loss.classification = parse_classification_loss(loss);
    cfg.loss.alpha = alpha;
    cfg.loss.gamma = gamma;
    cfg.loss.auxiliary = parse_auxiliary_loss(aux);
    cfg.loss.beta = beta;
    cfg.validate();
    return cfg;
  }

  std::vector<std::size_t> hidden_dims() const { return parse_list<std::size_t>(hidden, "--hidden"); }
};

void add_loss_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--loss", f.loss, "classification loss")
      ->check(CLI::IsMember({"nll", "ls", "fl", "brier"}))
      ->capture_default_str();
  sub->add_option("--alpha", f.alpha, "label smoothing alpha")->capture_default_str();
  sub->add_option("--gamma", f.gamma, "focal loss gamma")->capture_default_str();
  sub->add_option("--aux", f.aux, "auxiliary calibration loss")
      ->check(CLI::IsMember({"none", "mdca", "dca"}))
      ->capture_default_str();
}

void add_trainer_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--hidden", f.hidden, "hidden layer widths, comma separated")->capture_default_str();
  sub->add_option("--epochs", f.epochs)->capture_default_str();
  sub->add_option("--batch-size", f.batch_size)->capture_default_str();
  sub->add_option("--lr", f.lr)->capture_default_str();
  sub->add_option("--momentum", f.momentum)->capture_default_str();
  sub->add_option("--wd", f.weight_decay, "weight decay")->capture_default_str();
  sub->add_option("--milestones", f.milestones, "epochs at which lr is decayed, comma separated");
  sub->add_option("--lr-decay", f.lr_decay)->capture_default_str();
  sub->add_option("--val-fraction", f.val_fraction)->capture_default_str();
}

std::string history_csv(const TrainResult& result, const TrainConfig& cfg) {
  std::string text = "epoch,lr,train_loss,val_accuracy,selected\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e)
    text += std::to_string(e) + "," + fmt_double(learning_rate_at(cfg, e)) + "," +
            fmt_double(result.train_loss[e]) + "," + fmt_double(result.val_accuracy[e]) + "," +
            (e == result.selected_epoch ? "1" : "0") + "\n";
  return text;
}

// ------------------------------------------------------------ commands

struct GenerateArgs {
  std::string kind;
  std::size_t k = 3;
  std::size_t n = 3000;
  std::size_t d = 2;
  double sep = 6.0;
  double imbalance = 10.0;
  double rotate = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, const CLI::App* sub, std::ostream& out) {
  const BlobParams params{a.k, a.n, a.d, a.sep};
  LabeledDataset ds = a.kind == "blobs" ? gen_blobs(params, a.seed)
                                        : gen_longtail(params, a.imbalance, a.seed);
  if (a.rotate != 0.0) ds = rotate_features(ds, a.rotate);
  save_dataset_csv(ds, a.out);
  write_manifest(a.out, sub, a.seed, {a.out});
  out << "wrote " << ds.size() << " rows to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  TrainFlags flags;
  std::uint64_t seed = 0;
  std::string out;
  std::string history;
};

int cmd_train(const TrainArgs& a, const CLI::App* sub, std::ostream& out) {
  const TrainConfig cfg = a.flags.config(a.seed);
  const LabeledDataset ds = load_dataset_csv(a.data);
  const TrainResult result = train(ds, a.flags.hidden_dims(), cfg);
  const std::string history = a.history.empty() ? sibling(a.out, ".history.csv").string() : a.history;
  write_text(a.out, model_to_json(result.model));
  write_text(history, history_csv(result, cfg));
  write_manifest(a.out, sub, a.seed, {a.out, history});
  out << "selected epoch " << result.selected_epoch << " val_accuracy "
      << fmt_double(result.val_accuracy.empty() ? 0.0 : result.val_accuracy[result.selected_epoch])
      << "\n";
  return 0;
}

struct SourceArgs {
  std::string log;
  std::string model;
  std::string data;
  int bins = 15;
};

void add_source_flags(CLI::App* sub, SourceArgs& s) {
  sub->add_option("--log", s.log, "prediction log (JSONL)");
  sub->add_option("--model", s.model, "model JSON");
  sub->add_option("--data", s.data, "dataset CSV scored with --model");
  sub->add_option("--bins", s.bins, "number of equal-width bins")->capture_default_str();
}

struct ScoreArgs {
  SourceArgs src;
  std::string out;
  std::string dump_log;
};

int cmd_score(const ScoreArgs& a, const CLI::App* sub, std::ostream& out) {
  require(a.src.bins >= 1, "--bins must be at least 1");
  const Predictions pred = predictions_from(a.src.log, a.src.model, a.src.data, "score");
  const std::string text = report_json(calibration_report(*pred.log, {a.src.bins})).dump(2) + "\n";
  if (!a.dump_log.empty())
    save_prediction_log_jsonl(*pred.log, a.dump_log, pred.logits ? &*pred.logits : nullptr);
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
    std::vector<std::string> outputs{a.out};
    if (!a.dump_log.empty()) outputs.push_back(a.dump_log);
    write_manifest(a.out, sub, 0, outputs);
  }
  return 0;
}

struct CalibrateArgs {
  std::string method;
  std::string holdout_log;
  std::string model;
  std::string holdout;
  std::string test_log;
  std::string test;
  int bins = 15;
  std::size_t dc_epochs = 500;
  double dc_lr = 0.01;
  std::string out;
  std::string report;
};

int cmd_calibrate(const CalibrateArgs& a, const CLI::App* sub, std::ostream& out) {
  require(a.bins >= 1, "--bins must be at least 1");
  const Predictions hold = predictions_from(a.holdout_log, a.model, a.holdout, "calibrate hold-out");
  Calibrator calibrator;
  if (a.method == "ts") {
    require(hold.logits.has_value(), "temperature scaling needs logits in the hold-out input");
    calibrator = fit_temperature(*hold.logits, hold.log->labels());
  } else {
    OdirConfig cfg;
    cfg.epochs = a.dc_epochs;
    cfg.lr = a.dc_lr;
    calibrator = fit_dirichlet(hold.log->probs(), hold.log->labels(), cfg);
  }
  write_text(a.out, calibrator_to_json(calibrator));
  std::vector<std::string> outputs{a.out};

  // Without a separate test input the report pair is computed on the hold-out.
  std::optional<Predictions> separate;
  if (!a.test_log.empty() || !a.test.empty())
    separate = predictions_from(a.test_log, a.test.empty() ? "" : a.model, a.test, "calibrate test");
  const Predictions& test = separate ? *separate : hold;
  Matrix calibrated;
  if (const auto* ts = std::get_if<TemperatureModel>(&calibrator)) {
    require(test.logits.has_value(), "temperature scaling needs logits in the test input");
    calibrated = apply_temperature(*ts, *test.logits);
  } else {
    calibrated = apply_dirichlet(std::get<DirichletModel>(calibrator), test.log->probs());
  }
  const PredictionLog after(std::move(calibrated),
                            std::vector<int>(test.log->labels().begin(), test.log->labels().end()));
  const json pair{{"before", report_json(calibration_report(*test.log, {a.bins}))},
                  {"after", report_json(calibration_report(after, {a.bins}))},
                  {"evaluated_on", separate ? "test" : "holdout"}};
  const std::string report_path = a.report.empty() ? sibling(a.out, ".report.json").string() : a.report;
  write_text(report_path, pair.dump(2) + "\n");
  outputs.push_back(report_path);
  write_manifest(a.out, sub, 0, outputs);
  out << calibrator_to_json(calibrator);
  return 0;
}

struct ReliabilityArgs {
  SourceArgs src;
  bool misclassified_only = false;
  std::string format = "json";
  std::string out;
};

int cmd_reliability(const ReliabilityArgs& a, const CLI::App* sub, std::ostream& out) {
  require(a.src.bins >= 1, "--bins must be at least 1");
  const Predictions pred = predictions_from(a.src.log, a.src.model, a.src.data, "reliability");
  const ReliabilityTable table = reliability_table(*pred.log, {a.src.bins}, a.misclassified_only);
  std::string text;
  if (a.format == "tsv") {
    text = "# n=" + std::to_string(table.n) + " accuracy=" + fmt_double(table.accuracy) +
           " mean_confidence=" + fmt_double(table.mean_confidence) + "\n";
    text += "lower\tupper\tcount\taccuracy\tmean_confidence\n";
    for (const auto& b : table.bins)
      text += fmt_double(b.lower) + "\t" + fmt_double(b.upper) + "\t" + std::to_string(b.count) +
              "\t" + fmt_double(b.accuracy) + "\t" + fmt_double(b.mean_confidence) + "\n";
  } else {
    json bins = json::array();
    for (const auto& b : table.bins)
      bins.push_back({{"lower", b.lower},
                      {"upper", b.upper},
                      {"count", b.count},
                      {"accuracy", b.accuracy},
                      {"mean_confidence", b.mean_confidence}});
    const json doc{{"schema", "calibkit/reliability/v1"},
                   {"m", a.src.bins},
                   {"n", table.n},
                   {"misclassified_only", a.misclassified_only},
                   {"accuracy", table.accuracy},
                   {"mean_confidence", table.mean_confidence},
                   {"bins", std::move(bins)}};
    text = doc.dump(2) + "\n";
  }
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
    write_manifest(a.out, sub, 0, {a.out});
  }
  return 0;
}

struct SweepArgs {
  std::string data;
  std::string test;
  double test_fraction = 0.2;
  TrainFlags flags;
  std::string betas = "0.25,0.5,1,5,10";
  std::string seeds = "1,2,3,4,5";
  std::uint64_t seed = 0;
  int bins = 15;
  std::string out;
};

struct SweepCell {
  double beta = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double sce = 0.0;
};

int cmd_sweep_beta(SweepArgs a, const CLI::App* sub, std::ostream& out) {
  require(a.bins >= 1, "--bins must be at least 1");
  const auto betas = parse_list<double>(a.betas, "--betas");
  const auto seeds = parse_list<std::uint64_t>(a.seeds, "--seeds");
  require(!betas.empty() && !seeds.empty(), "--betas and --seeds must be nonempty");
  const auto hidden = a.flags.hidden_dims();
  // Validate the loss/trainer flags once before fanning out.
  a.flags.config(0);

  const LabeledDataset all = load_dataset_csv(a.data);
  LabeledDataset train_set;
  LabeledDataset test_set;
  if (a.test.empty()) {
    auto parts = split_dataset(all, a.test_fraction, derive_seed(a.seed, "sweep-test-split"));
    train_set = std::move(parts.first);
    test_set = std::move(parts.second);
  } else {
    train_set = all;
    test_set = load_dataset_csv(a.test);
  }
  const std::size_t k = std::max(train_set.k, test_set.k);
  train_set.k = k;

  std::vector<SweepCell> cells;
  for (double beta : betas)
    for (auto s : seeds) cells.push_back({beta, s});
  const auto count = static_cast<std::int64_t>(cells.size());
  std::vector<std::string> failures(cells.size());
  // Cells are independent; results land in their own slot and are written in
  // list order afterwards.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < count; ++c) {
    auto& cell = cells[static_cast<std::size_t>(c)];
    try {
      TrainFlags f = a.flags;
      f.beta = cell.beta;
      const TrainResult result = train(train_set, hidden, f.config(cell.seed));
      const Matrix logits = forward(result.model, test_set.features);
      const PredictionLog log(softmax_rows(logits), test_set.labels);
      const auto report = calibration_report(log, {a.bins});
      cell.accuracy = report.accuracy;
      cell.ece = report.ece;
      cell.sce = report.sce;
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(c)] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw ValidationError(f);

  std::string text = "beta,seed,accuracy,ece,sce\n";
  for (const auto& cell : cells)
    text += fmt_double(cell.beta) + "," + std::to_string(cell.seed) + "," +
            fmt_double(cell.accuracy) + "," + fmt_double(cell.ece) + "," + fmt_double(cell.sce) + "\n";
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
    write_manifest(a.out, sub, a.seed, {a.out});
  }
  return 0;
}

void print_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"calibkit: confidence calibration metrics, losses, training and post-hoc calibration"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset CSV");
  generate->add_option("kind", gen.kind, "blobs or longtail")
      ->required()
      ->check(CLI::IsMember({"blobs", "longtail"}));
  generate->add_option("--k", gen.k, "number of classes")->capture_default_str();
  generate->add_option("--n", gen.n, "samples (blobs) or largest class count (longtail)")
      ->capture_default_str();
  generate->add_option("--d", gen.d, "feature dimensions")->capture_default_str();
  generate->add_option("--sep", gen.sep, "distance between neighbouring class means")
      ->capture_default_str();
  generate->add_option("--if", gen.imbalance, "imbalance factor (longtail)")->capture_default_str();
  generate->add_option("--rotate", gen.rotate, "rotate the first two dims by this many degrees")
      ->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--out", gen.out, "output CSV")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train an MLP and write model JSON");
  train_cmd->add_option("--data", tr.data, "dataset CSV")->required()->check(CLI::ExistingFile);
  add_loss_flags(train_cmd, tr.flags);
  train_cmd->add_option("--beta", tr.flags.beta, "auxiliary loss weight")->capture_default_str();
  add_trainer_flags(train_cmd, tr.flags);
  train_cmd->add_option("--seed", tr.seed)->capture_default_str();
  train_cmd->add_option("--out", tr.out, "output model JSON")->required();
  train_cmd->add_option("--history", tr.history, "per-epoch CSV (default <out>.history.csv)");

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "write a calibration report");
  add_source_flags(score, sc.src);
  score->add_option("--out", sc.out, "report JSON (default stdout)");
  score->add_option("--dump-log", sc.dump_log, "also write the predictions as JSONL");

  CalibrateArgs ca;
  auto* calibrate = app.add_subcommand("calibrate", "fit a post-hoc calibrator");
  calibrate->add_option("--method", ca.method, "ts or dirichlet")
      ->required()
      ->check(CLI::IsMember({"ts", "dirichlet"}));
  calibrate->add_option("--log", ca.holdout_log, "hold-out prediction log (JSONL)");
  calibrate->add_option("--model", ca.model, "model JSON");
  calibrate->add_option("--holdout", ca.holdout, "hold-out dataset CSV scored with --model");
  calibrate->add_option("--test-log", ca.test_log, "test prediction log for the report pair");
  calibrate->add_option("--test", ca.test, "test dataset CSV scored with --model");
  calibrate->add_option("--bins", ca.bins)->capture_default_str();
  calibrate->add_option("--dc-epochs", ca.dc_epochs)->capture_default_str();
  calibrate->add_option("--dc-lr", ca.dc_lr)->capture_default_str();
  calibrate->add_option("--out", ca.out, "calibrator JSON")->required();
  calibrate->add_option("--report", ca.report, "before/after report (default <out>.report.json)");

  ReliabilityArgs re;
  auto* reliability = app.add_subcommand("reliability", "export reliability-diagram data");
  add_source_flags(reliability, re.src);
  reliability->add_flag("--misclassified-only", re.misclassified_only,
                        "bin only wrongly predicted samples");
  reliability->add_option("--format", re.format)
      ->check(CLI::IsMember({"json", "tsv"}))
      ->capture_default_str();
  reliability->add_option("--out", re.out, "output file (default stdout)");

  SweepArgs sw;
  auto* sweep = app.add_subcommand("sweep-beta", "train one model per (beta, seed) and score it");
  sweep->add_option("--data", sw.data, "training dataset CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--test", sw.test, "test dataset CSV (default: split from --data)");
  sweep->add_option("--test-fraction", sw.test_fraction)->capture_default_str();
  sw.flags.aux = "mdca";  // the sweep is about beta, so an auxiliary loss is on by default
  add_loss_flags(sweep, sw.flags);
  add_trainer_flags(sweep, sw.flags);
  sweep->add_option("--betas", sw.betas)->capture_default_str();
  sweep->add_option("--seeds", sw.seeds)->capture_default_str();
  sweep->add_option("--seed", sw.seed, "seed for the train/test split")->capture_default_str();
  sweep->add_option("--bins", sw.bins)->capture_default_str();
  sweep->add_option("--out", sw.out, "output CSV (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, generate, out);
    if (train_cmd->parsed()) return cmd_train(tr, train_cmd, out);
    if (score->parsed()) return cmd_score(sc, score, out);
    if (calibrate->parsed()) return cmd_calibrate(ca, calibrate, out);
    if (reliability->parsed()) return cmd_reliability(re, reliability, out);
    if (sweep->parsed()) return cmd_sweep_beta(sw, sweep, out);
  } catch (const ValidationError& e) {
    print_error(err, "validation", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error(err, "internal", e.what());
    return 1;
  }
  print_error(err, "usage", "no subcommand");
  return 2;
}

}  // namespace calibkit::cli
