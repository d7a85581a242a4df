#include "bnp/cli.hpp"

#include "bnp/bayesopt.hpp"
#include "bnp/csv.hpp"
#include "bnp/evalsuite.hpp"
#include "bnp/train.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace bnp::cli {

namespace {

enum class Type { Int, Real, Text, Flag };

struct Key {
  const char* name;
  Type type;
  const char* def;
  const char* help;
};

const std::vector<Key>& keys_for(const std::string& command) {
  static const std::map<std::string, std::vector<Key>> table = {
      {"train",
       {{"model", Type::Text, "cnp", "cnp|np|canp|anp|bnp|banp"},
        {"kernel", Type::Text, "rbf", "training data: rbf|matern|periodic|t-noise"},
        {"steps", Type::Int, "100000", "optimizer steps"},
        {"batch", Type::Int, "100", "tasks per step"},
        {"lr", Type::Real, "0.0005", "initial learning rate (cosine decay to 0)"},
        {"k", Type::Int, "4", "samples per task (latent draws or bootstrap contexts)"},
        {"seed", Type::Int, "0", "global seed"},
        {"hidden", Type::Int, "128", "hidden width d_h"},
        {"variant", Type::Text, "full", "bnp/banp only: full|naive|no-paired|no-adapt|no-baseloss, joined with +"},
        {"mean-elbo", Type::Flag, "false", "np/anp: average per-sample ELBOs instead of importance weighting"},
        {"grad-clip", Type::Real, "0", "global gradient-norm clip, 0 disables"},
        {"log-every", Type::Int, "100", "steps per metric-log row"},
        {"checkpoint-every", Type::Int, "0", "steps between intermediate checkpoints, 0 for final only"},
        {"out", Type::Text, "runs/train", "output directory"},
        {"threads", Type::Int, "1", "worker threads"}}},
      {"eval",
       {{"ckpt", Type::Text, "", "checkpoint file"},
        {"kernel", Type::Text, "rbf", "rbf|matern|periodic|t-noise"},
        {"t-noise", Type::Flag, "false", "add heavy-tailed noise (rbf only)"},
        {"k", Type::Int, "50", "ensemble size"},
        {"batches", Type::Int, "200", "evaluation batches"},
        {"batch-tasks", Type::Int, "16", "tasks per batch"},
        {"levels", Type::Int, "10", "calibration levels"},
        {"variant", Type::Text, "auto", "prediction pipeline; auto uses the checkpoint's variant"},
        {"seed", Type::Int, "1", "evaluation seed"},
        {"out", Type::Text, "results.csv", "result CSV"},
        {"threads", Type::Int, "1", "worker threads"}}},
      {"bo",
       {{"ckpt", Type::Text, "", "surrogate checkpoint"},
        {"oracle", Type::Flag, "false", "use the GP oracle surrogate"},
        {"random", Type::Flag, "false", "use random search"},
        {"objective-kernel", Type::Text, "rbf", "rbf|matern|periodic|rbf-tnoise"},
        {"functions", Type::Int, "100", "objective functions"},
        {"iters", Type::Int, "100", "iterations per function"},
        {"init-points", Type::Int, "1", "initial random observations"},
        {"k", Type::Int, "50", "ensemble size for model surrogates"},
        {"variant", Type::Text, "auto", "prediction pipeline for bootstrap surrogates"},
        {"seed", Type::Int, "1", "seed for objectives and initial designs"},
        {"out", Type::Text, "trace.csv", "trace CSV"},
        {"threads", Type::Int, "1", "worker threads"}}},
      {"ablate",
       {{"model", Type::Text, "bnp", "bnp|banp"},
        {"kernel", Type::Text, "rbf", "training data"},
        {"steps", Type::Int, "100000", "optimizer steps per variant"},
        {"batch", Type::Int, "100", "tasks per step"},
        {"lr", Type::Real, "0.0005", "initial learning rate"},
        {"k", Type::Int, "4", "bootstrap contexts during training"},
        {"seed", Type::Int, "0", "training seed shared by all variants"},
        {"hidden", Type::Int, "128", "hidden width d_h"},
        {"eval-batches", Type::Int, "200", "evaluation batches per dataset"},
        {"eval-batch-tasks", Type::Int, "16", "tasks per evaluation batch"},
        {"eval-k", Type::Int, "50", "ensemble size at evaluation"},
        {"eval-seed", Type::Int, "1", "evaluation seed"},
        {"out", Type::Text, "runs/ablate", "output directory"},
        {"threads", Type::Int, "1", "worker threads"}}},
      {"dump-tasks",
       {{"kernel", Type::Text, "rbf", "rbf|matern|periodic|t-noise"},
        {"n", Type::Int, "4", "number of tasks"},
        {"seed", Type::Int, "1", "seed"},
        {"out", Type::Text, "-", "CSV path, - for stdout"}}},
  };
  return table.at(command);
}

const std::vector<std::string> kCommands = {"train", "eval", "bo", "ablate", "dump-tasks"};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::map<std::string, std::string> read_config_file(const std::string& path, const std::vector<Key>& keys) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = "config file '" + path + "' line " + std::to_string(number);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (std::none_of(keys.begin(), keys.end(), [&](const Key& k) { return key == k.name; }))
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

void check_type(const Key& key, const std::string& value) {
  const std::string what = std::string("option --") + key.name;
  try {
    std::size_t used = 0;
    switch (key.type) {
      case Type::Int:
        std::stoll(value, &used);
        break;
      case Type::Real:
        std::stod(value, &used);
        break;
      case Type::Flag:
        if (value != "true" && value != "false" && value != "1" && value != "0")
          throw std::invalid_argument(what + ": expected true|false, got '" + value + "'");
        return;
      case Type::Text: return;
    }
    if (used != value.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::invalid_argument& e) {
    if (key.type == Type::Flag) throw;
    throw std::invalid_argument(what + ": expected " + (key.type == Type::Int ? "an integer" : "a number") +
                                ", got '" + value + "'");
  } catch (const std::out_of_range&) {
    throw std::invalid_argument(what + ": value '" + value + "' is out of range");
  }
}

Dataset resolve_dataset(const RunConfig& c) {
  Dataset d = parse_dataset(c.at("kernel"));
  if (c.options.count("t-noise") && c.flag("t-noise")) {
    if (d != Dataset::Rbf && d != Dataset::TNoise) throw std::invalid_argument("--t-noise is defined for rbf tasks only");
    d = Dataset::TNoise;
  }
  return d;
}

void validate(const RunConfig& c) {
  const auto& cmd = c.command;
  if (cmd == "train" || cmd == "ablate") {
    const auto kind = parse_model_kind(c.at("model"));
    if (cmd == "ablate" && !is_bootstrap(kind)) throw std::invalid_argument("ablate needs --model bnp or banp");
    if (cmd == "train") {
      const auto flags = VariantFlags::parse(c.at("variant"));
      if (flags.any() && !is_bootstrap(kind))
        throw std::invalid_argument("--variant " + c.at("variant") + " applies to bnp/banp only, not " + c.at("model"));
    }
    parse_dataset(c.at("kernel"));
  }
  if (cmd == "eval" || cmd == "dump-tasks") resolve_dataset(c);
  if (cmd == "eval" && c.at("ckpt").empty()) throw std::invalid_argument("eval needs --ckpt");
  if ((cmd == "eval" || cmd == "bo") && c.at("variant") != "auto") VariantFlags::parse(c.at("variant"));
  if (cmd == "bo") {
    const int sources = (c.at("ckpt").empty() ? 0 : 1) + (c.flag("oracle") ? 1 : 0) + (c.flag("random") ? 1 : 0);
    if (sources != 1) throw std::invalid_argument("bo needs exactly one of --ckpt PATH, --oracle, --random");
    parse_dataset(c.at("objective-kernel"));
  }
  if (c.options.count("threads") && c.integer("threads") < 1) throw std::invalid_argument("--threads must be >= 1");
}

std::string describe(const RunConfig& c) {
  std::ostringstream s;
  s << "# " << c.command << '\n';
  for (const auto& [k, v] : c.options) s << "# " << k << " = " << v << '\n';
  return s.str();
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& writer, std::ostream& out) {
  if (path == "-") {
    writer(out);
    return;
  }
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  write_atomically(p, writer);
}

Checkpoint load_existing(const std::string& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint not found: " + path);
  return load_checkpoint(path);
}

VariantFlags resolve_variant(const RunConfig& c, const Checkpoint& ckpt) {
  if (c.at("variant") == "auto") return ckpt.config.flags;
  const auto flags = VariantFlags::parse(c.at("variant"));
  const ModelKind kind = ckpt.model.kind();
  if (flags.naive && has_latent(kind)) throw std::invalid_argument("--variant naive needs a cnp/canp/bnp/banp checkpoint");
  if (flags.any() && !flags.naive && !is_bootstrap(kind))
    throw std::invalid_argument("--variant applies to bnp/banp checkpoints only");
  return flags;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.model = parse_model_kind(c.at("model"));
  t.dataset = parse_dataset(c.at("kernel"));
  t.total_steps = c.integer("steps");
  t.batch_tasks = static_cast<int>(c.integer("batch"));
  t.lr0 = c.real("lr");
  t.k_train = static_cast<int>(c.integer("k"));
  t.seed = static_cast<std::uint64_t>(c.integer("seed"));
  t.hidden = static_cast<int>(c.integer("hidden"));
  if (c.command == "train") {
    t.flags = VariantFlags::parse(c.at("variant"));
    t.importance_weighted = !c.flag("mean-elbo");
    t.grad_clip = c.real("grad-clip");
    t.log_every = c.integer("log-every");
    t.checkpoint_every = c.integer("checkpoint-every");
  }
  return t;
}

TrainOptions train_options(const std::filesystem::path& dir, std::ostream& err) {
  TrainOptions o;
  o.out_dir = dir;
  o.on_log = [&err](std::int64_t step, double loss, double lr) {
    err << "step " << step << " loss " << fmt6(loss) << " lr " << fmt6(lr) << '\n';
  };
  return o;
}

int run_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto config = train_config(c);
  const auto result = train(config, train_options(c.at("out"), err));
  out << checkpoint_path(c.at("out"), result.checkpoint.step).string() << '\n';
  return 0;
}

int run_eval(const RunConfig& c, std::ostream& out) {
  const auto ckpt = load_existing(c.at("ckpt"));
  EvalSpec spec;
  spec.dataset = resolve_dataset(c);
  spec.n_batches = static_cast<int>(c.integer("batches"));
  spec.batch_tasks = static_cast<int>(c.integer("batch-tasks"));
  spec.k = static_cast<int>(c.integer("k"));
  spec.seed = static_cast<std::uint64_t>(c.integer("seed"));
  spec.levels = static_cast<int>(c.integer("levels"));
  spec.flags = resolve_variant(c, ckpt);
  const std::vector<EvalReport> reports{evaluate(ckpt.model, spec)};
  write_file(c.at("out"), [&](std::ostream& o) { write_eval_csv(o, reports); }, out);
  return 0;
}

int run_bo(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Dataset dataset = parse_dataset(c.at("objective-kernel"));
  std::optional<Checkpoint> ckpt;
  Surrogate s;
  if (!c.at("ckpt").empty()) {
    ckpt = load_existing(c.at("ckpt"));
    s = Surrogate::neural(ckpt->model, static_cast<int>(c.integer("k")), resolve_variant(c, *ckpt));
  } else if (c.flag("oracle")) {
    s = Surrogate::gp_oracle(TaskDistribution::for_dataset(dataset).prior.family);
  } else {
    s = Surrogate::random_search();
  }
  const int functions = static_cast<int>(c.integer("functions"));
  const int iters = static_cast<int>(c.integer("iters"));
  const int init = static_cast<int>(c.integer("init-points"));
  const auto seed = static_cast<std::uint64_t>(c.integer("seed"));
  if (functions < 1) throw std::invalid_argument("--functions must be >= 1");
  std::vector<BOTrace> traces(static_cast<std::size_t>(functions));
  std::vector<std::string> errors(static_cast<std::size_t>(functions));
#pragma omp parallel for schedule(dynamic, 1)
  for (int f = 0; f < functions; ++f) {
    try {
      traces[static_cast<std::size_t>(f)] = bo_run(s, make_objective(seed, static_cast<std::uint64_t>(f), dataset), iters, init, seed, f);
      errors[static_cast<std::size_t>(f)] = traces[static_cast<std::size_t>(f)].error;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(f)] = e.what();
    }
  }
  for (int f = 0; f < functions; ++f)
    if (!errors[static_cast<std::size_t>(f)].empty())
      throw std::runtime_error("function " + std::to_string(f) + ": " + errors[static_cast<std::size_t>(f)]);
  double regret = 0.0;
  for (const auto& t : traces) regret += t.final_regret();
  err << "mean final simple regret " << fmt6(regret / functions) << '\n';
  write_file(c.at("out"), [&](std::ostream& o) { write_trace_csv(o, traces); }, out);
  return 0;
}

int run_ablate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const std::filesystem::path dir = c.at("out");
  std::vector<EvalReport> reports;
  for (const char* name : {"full", "naive", "no-paired", "no-adapt"}) {
    TrainConfig config = train_config(c);
    config.flags = VariantFlags::parse(name);
    err << "training variant " << name << '\n';
    const auto result = train(config, train_options(dir / name, err));
    for (const Dataset d : {Dataset::Rbf, Dataset::TNoise}) {
      EvalSpec spec;
      spec.dataset = d;
      spec.n_batches = static_cast<int>(c.integer("eval-batches"));
      spec.batch_tasks = static_cast<int>(c.integer("eval-batch-tasks"));
      spec.k = static_cast<int>(c.integer("eval-k"));
      spec.seed = static_cast<std::uint64_t>(c.integer("eval-seed"));
      spec.flags = config.flags;
      auto r = evaluate(result.checkpoint.model, spec);
      r.model = std::string(to_string(config.model)) + "-" + name;
      reports.push_back(std::move(r));
    }
  }
  write_file((dir / "ablation.csv").string(), [&](std::ostream& o) { write_eval_csv(o, reports); }, out);
  return 0;
}

int run_dump(const RunConfig& c, std::ostream& out) {
  const auto n = static_cast<int>(c.integer("n"));
  if (n < 1) throw std::invalid_argument("--n must be >= 1");
  const auto tasks = sample_batch(static_cast<std::uint64_t>(c.integer("seed")), "dump", 0, n,
                                  TaskDistribution::for_dataset(resolve_dataset(c)));
  write_file(c.at("out"), [&](std::ostream& o) { write_tasks_csv(o, tasks); }, out);
  return 0;
}

}  // namespace

const std::string& RunConfig::at(const std::string& key) const {
  const auto it = options.find(key);
  if (it == options.end()) throw std::invalid_argument("option --" + key + " does not apply to " + command);
  return it->second;
}

long long RunConfig::integer(const std::string& key) const { return std::stoll(at(key)); }
double RunConfig::real(const std::string& key) const { return std::stod(at(key)); }
bool RunConfig::flag(const std::string& key) const {
  const auto& v = at(key);
  return v == "true" || v == "1";
}

RunConfig parse_args(const std::vector<std::string>& args) {
  CLI::App app{"Neural process training, evaluation and Bayesian optimization", "bnp"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> text;
  std::map<std::string, std::map<std::string, bool>> flags;
  std::map<std::string, std::string> config_path;
  std::map<std::string, CLI::App*> subs;
  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd);
    subs[cmd] = sub;
    sub->add_option("--config", config_path[cmd], "file of 'key = value' lines; flags override it");
    for (const auto& key : keys_for(cmd)) {
      const std::string name = std::string("--") + key.name;
      if (key.type == Type::Flag) {
        sub->add_flag(name, flags[cmd][key.name], key.help);
      } else {
        sub->add_option(name, text[cmd][key.name], key.help)->default_str(key.def);
      }
    }
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream s;
    app.exit(e, s, s);
    throw HelpRequested{s.str()};
  } catch (const CLI::ParseError& e) {
    throw std::invalid_argument(e.what());
  }

  RunConfig c;
  for (const auto& cmd : kCommands)
    if (subs[cmd]->parsed()) c.command = cmd;
  const auto& keys = keys_for(c.command);
  std::map<std::string, std::string> file;
  if (!config_path[c.command].empty()) file = read_config_file(config_path[c.command], keys);
  for (const auto& key : keys) {
    std::string value = key.def;
    if (auto it = file.find(key.name); it != file.end()) value = it->second;
    if (subs[c.command]->count(std::string("--") + key.name) > 0)
      value = key.type == Type::Flag ? (flags[c.command][key.name] ? "true" : "false") : text[c.command][key.name];
    check_type(key, value);
    c.options[key.name] = value;
  }
  validate(c);
  return c;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    if (config.options.count("threads")) omp_set_num_threads(static_cast<int>(config.integer("threads")));
    err << describe(config);
    if (config.command == "train") return run_train(config, out, err);
    if (config.command == "eval") return run_eval(config, out);
    if (config.command == "bo") return run_bo(config, out, err);
    if (config.command == "ablate") return run_ablate(config, out, err);
    if (config.command == "dump-tasks") return run_dump(config, out);
    throw std::invalid_argument("unknown command '" + config.command + "'");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  RunConfig config;
  try {
    config = parse_args(args);
  } catch (const HelpRequested& h) {
    out << h.text;
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\nrun with --help for the option table\n";
    return 2;
  }
  return run(config, out, err);
}

}  // namespace bnp::cli
