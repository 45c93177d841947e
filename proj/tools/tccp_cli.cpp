// Command-line front end: simulate, featurize, train, evaluate, sweep, report, reproduce.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tccp/tccp.hpp"

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct Flags {
  std::string config_file;
  std::vector<std::string> sets;                     // --set key=value
  std::map<std::string, std::string> values;         // flag-backed keys
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

// Registers --<flag> as an override for config key `key`.
void key_flag(CLI::App* app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
  f.options.emplace_back(key, app->add_option("--" + flag, f.values[key], help));
}

Overrides collect(const Flags& f) {
  Overrides out;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw tccp::ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  // named flags win over --set
  for (const auto& [key, opt] : f.options)
    if (opt->count() > 0) out.emplace_back(key, f.values.at(key));
  return out;
}

void emit_report(const tccp::EvalReport& r, const std::string& json_path, const std::string& table_path) {
  std::cout << tccp::format_table(r);
  if (!json_path.empty()) {
    auto out = tccp::detail::open_out(json_path);
    out << tccp::report_to_json(r).dump(2) << '\n';
  }
  if (!table_path.empty()) {
    auto out = tccp::detail::open_out(table_path);
    out << tccp::format_table(r);
  }
}

std::vector<int> parse_ops(const std::string& s) {
  std::vector<int> ops;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      ops.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw tccp::ConfigError("--ops expects comma-separated day counts, got '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  for (int op : ops)
    if (op < 1) throw tccp::ConfigError("observation periods must be positive");
  return ops;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-sensitive churn prediction with positive-unlabeled learning"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", flags.sets, "override any config key (key=value), repeatable");
  key_flag(&app, flags, "seed", "seed", "seed for simulation and training");
  key_flag(&app, flags, "out-dir", "out_dir", "output directory");
  key_flag(&app, flags, "data-dir", "data_dir", "dataset directory");
  app.fallthrough();

  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the resolved configuration and exit");

  auto* sim = app.add_subcommand("simulate", "generate a synthetic event log, profiles and truth file");
  key_flag(sim, flags, "users", "users", "number of users");
  key_flag(sim, flags, "drift", "drift_strength", "behavior drift strength");

  auto* feat = app.add_subcommand("featurize", "write the training window and the test set as sample sets");
  key_flag(feat, flags, "op", "op", "observation period (days)");
  key_flag(feat, flags, "cp", "cp", "churn period (days)");

  auto* train = app.add_subcommand("train", "train TCCP or a supervised baseline, persisting every intermediate");
  key_flag(train, flags, "mode", "mode", "tccp | lr | fm");
  key_flag(train, flags, "op", "op", "observation period (days)");
  key_flag(train, flags, "cp", "cp", "churn period (days)");
  key_flag(train, flags, "c-method", "c_method", "e1 | e2 | e3 | historical");
  key_flag(train, flags, "epochs", "epochs", "SGD passes");
  key_flag(train, flags, "learning-rate", "learning_rate", "SGD step size");
  key_flag(train, flags, "k", "k", "FM factor dimension");

  std::string model_path, out_json, out_table;
  auto* evalc = app.add_subcommand("evaluate", "score the test window with a model file or a rule");
  evalc->add_option("--model", model_path, "model file written by train");
  key_flag(evalc, flags, "mode", "mode", "rule_recency | rule_frequency when no --model is given");
  key_flag(evalc, flags, "L", "rule_L", "recency threshold");
  key_flag(evalc, flags, "M", "rule_M", "frequency threshold");
  key_flag(evalc, flags, "D", "rule_D", "frequency window");
  evalc->add_option("--out-json", out_json, "write the report rows as JSON");
  evalc->add_option("--out-table", out_table, "write the report as a text table");

  std::string ops_text = "3,7,15,30,60,90";
  auto* sweep = app.add_subcommand("sweep", "TCCP AUC per observation period");
  sweep->add_option("--ops", ops_text, "comma-separated observation periods");
  key_flag(sweep, flags, "cp", "cp", "churn period (days)");

  auto* report = app.add_subcommand("report", "full comparison on an existing dataset");
  report->add_option("--out-json", out_json, "also write the report rows as JSON here");
  report->add_option("--out-table", out_table, "also write the text table here");
  report->add_option("--ops", ops_text, "observation periods for the sweep");

  auto* repro = app.add_subcommand("reproduce", "simulate, then run the full comparison and the sweep");
  key_flag(repro, flags, "users", "users", "number of users");
  bool keep_data = false;
  repro->add_flag("--keep-data", keep_data, "also write the simulated dataset under <out-dir>/data");

  app.footer("Config keys:\n" + tccp::describe_config() + "\nExit codes: 0 ok, 2 config error, 3 data error, 4 divergence.");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    auto cfg = tccp::resolve_config(flags.config_file, collect(flags));
    if (print_config) {
      std::cout << tccp::dump_config(cfg);
      return 0;
    }
    const std::string& out_dir = cfg.run.out_dir;

    if (*sim) {
      auto d = tccp::make_dataset(tccp::simulate(cfg.sim));
      tccp::write_dataset(cfg.data_dir, d);
      std::printf("wrote %zu users and %zu events to %s\n", d.profiles.size(), d.log.size(), cfg.data_dir.c_str());
      return 0;
    }

    if (*repro) {
      const auto d = tccp::make_dataset(tccp::simulate(cfg.sim));
      if (keep_data) tccp::write_dataset(tccp::join_path(out_dir, "data"), d);
      const auto ex = tccp::run_experiment(d, cfg.run, tccp::kOpGrid);
      tccp::write_experiment(out_dir, ex);
      {
        auto out = tccp::detail::open_out(tccp::join_path(out_dir, "config.txt"));
        out << tccp::dump_config(cfg);
      }
      std::cout << tccp::format_table(ex.report) << "\nop,auc\n";
      for (const auto& p : ex.op_sweep) std::printf("%d,%s\n", p.value, tccp::format_auc(p.auc).c_str());
      return 0;
    }

    const auto d = tccp::read_dataset(cfg.data_dir);

    if (*feat) {
      tccp::ensure_dir(out_dir);
      auto spec = cfg.run.window(d.log.horizon());
      if (cfg.run.mode != tccp::Mode::tccp) spec.op_days = cfg.run.cp_days;
      const auto window = tccp::build_window(d.index, d.profiles, spec, cfg.run.layout());
      tccp::write_sample_set(tccp::join_path(out_dir, "window.jsonl"), window);
      const auto test = tccp::make_test_set(d, cfg.run);
      tccp::write_sample_set(tccp::join_path(out_dir, "test.jsonl"), test.samples);
      std::printf("window: P=%zu U=%zu N=%zu; test: retained=%zu churned=%zu\n", window.P.size(), window.U.size(),
                  window.N.size(), test.samples.P.size(), test.samples.N.size());
      return 0;
    }

    if (*train) {
      if (cfg.run.mode == tccp::Mode::tccp) {
        const auto r = tccp::train_tccp(d, cfg.run);
        std::printf("c = %.6f (%s, support %zu); models in %s\n", r.c.c, tccp::to_string(r.c.method), r.c.support,
                    out_dir.c_str());
      } else if (cfg.run.mode == tccp::Mode::supervised_lr || cfg.run.mode == tccp::Mode::supervised_fm) {
        tccp::train_supervised(d, cfg.run);
        std::printf("model in %s\n", out_dir.c_str());
      } else {
        throw tccp::ConfigError("train --mode must be tccp, lr or fm");
      }
      return 0;
    }

    const auto test = tccp::make_test_set(d, cfg.run);

    if (*evalc) {
      tccp::EvalReport r;
      if (!model_path.empty()) {
        const auto mf = tccp::read_model(model_path);
        const bool tccp_model = mf.c.has_value();
        const auto mode = tccp_model ? tccp::Mode::tccp : (mf.is_fm() ? tccp::Mode::supervised_fm : tccp::Mode::supervised_lr);
        r.rows.push_back(tccp::evaluate(tccp::model_scorer(mf), test, tccp::method_name(mode),
                                        tccp::model_params(cfg.run, mode)));
      } else if (cfg.run.mode == tccp::Mode::rule_recency || cfg.run.mode == tccp::Mode::rule_frequency) {
        r.rows.push_back(tccp::run_rule(d, cfg.run, test));
      } else {
        throw tccp::ConfigError("evaluate needs --model or --mode rule_recency|rule_frequency");
      }
      emit_report(r, out_json, out_table);
      return 0;
    }

    if (*sweep) {
      const auto ops = parse_ops(ops_text);
      const auto pts = tccp::sweep_op(d, cfg.run, ops, test);
      tccp::ensure_dir(out_dir);
      tccp::write_sweep_csv(tccp::join_path(out_dir, "op_sweep.csv"), "op", pts);
      std::printf("op,auc\n");
      for (const auto& p : pts) std::printf("%d,%s\n", p.value, tccp::format_auc(p.auc).c_str());
      return 0;
    }

    if (*report) {
      const auto ex = tccp::run_experiment(d, cfg.run, parse_ops(ops_text));
      tccp::write_experiment(out_dir, ex);
      emit_report(ex.report, out_json, out_table);
      return 0;
    }
  } catch (const tccp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
