// Command-line front end for the preference-transfer laboratory.
//
//   lab generate       build a certified synthetic instance bundle
//   lab run            run the proxy-vs-scratch learning-curve experiment
//   lab bounds         evaluate sample-complexity bounds for a BoundInputs file
//   lab check          re-run the transfer condition checks on a stored bundle
//   lab adapter-oracle construct the centroid adapter for a stored bundle
//
// All configuration files are JSON; schemas are documented in the README.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "preflab/adapter_oracle.hpp"
#include "preflab/bounds.hpp"
#include "preflab/conditions.hpp"
#include "preflab/experiment.hpp"
#include "preflab/instance.hpp"
#include "preflab/rng.hpp"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw preflab::InvalidInputError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw preflab::InvalidInputError(path + ": " + e.what());
  }
  return j;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::uint64_t seed_override, bool has_seed) {
  preflab::InstanceSizes sizes;
  double beta = 1.0;
  std::uint64_t seed = 1;
  std::string note;
  if (!config_path.empty()) {
    const json j = read_json_file(config_path);
    if (j.contains("sizes")) {
      const auto& s = j.at("sizes");
      auto get = [&s](const char* key, int fallback) {
        return s.contains(key) ? s.at(key).get<int>() : fallback;
      };
      sizes.num_prompts = get("num_prompts", sizes.num_prompts);
      sizes.num_responses = get("num_responses", sizes.num_responses);
      sizes.latent_dim = get("latent_dim", sizes.latent_dim);
      sizes.simplex_dim = get("simplex_dim", sizes.simplex_dim);
      sizes.level_sets = get("level_sets", sizes.level_sets);
    }
    if (j.contains("beta")) beta = j.at("beta").get<double>();
    if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("note")) note = j.at("note").get<std::string>();
  }
  if (has_seed) seed = seed_override;

  preflab::InstanceBundle bundle = preflab::generate_instance(sizes, beta, seed);
  if (!note.empty()) bundle.note = note;
  preflab::save_bundle(bundle, out_dir);
  std::cout << "wrote bundle to " << out_dir << " (seed " << seed << ", overall checks "
            << (bundle.certificates.overall ? "pass" : "fail") << ")\n";
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, int threads_override,
            std::uint64_t seed_override, bool has_seed) {
  preflab::ExperimentConfig cfg = config_path.empty()
                                      ? preflab::default_experiment_config()
                                      : preflab::experiment_config_from_json(read_json_file(config_path));
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (threads_override > 0) cfg.threads = threads_override;
  if (has_seed) {
    cfg.seeds.clear();
    cfg.base_seed = seed_override;
  }

  const preflab::ExperimentResult result = preflab::run_experiment(cfg);
  preflab::emit_outputs(result, cfg.output_dir);
  std::cout << "wrote curves.csv, report.json, curves.svg to " << cfg.output_dir << "\n";
  if (!result.all_cells_completed) {
    std::cerr << "lab run: some cells diverged; see report.json\n";
    return 1;
  }
  return 0;
}

int cmd_bounds(const std::string& inputs_path) {
  const preflab::BoundInputs in = preflab::bound_inputs_from_json(read_json_file(inputs_path));
  std::cout << preflab::bounds_record(in).dump(2) << "\n";
  return 0;
}

int cmd_check(const std::string& bundle_dir, std::uint64_t seed_override, bool has_seed) {
  const preflab::InstanceBundle bundle = preflab::load_bundle(bundle_dir);
  preflab::ConditionCheckConfig cfg;
  cfg.beta = bundle.beta;
  cfg.seed = has_seed ? seed_override : preflab::derive_seed(bundle.seed, 900);
  const preflab::ConditionReport report =
      preflab::run_condition_checks(bundle.true_policy, bundle.fp, cfg);
  std::cout << preflab::report_to_json(report).dump(2) << "\n";
  return report.overall ? 0 : 1;
}

int cmd_adapter_oracle(const std::string& bundle_dir, const std::string& out_path) {
  const preflab::InstanceBundle bundle = preflab::load_bundle(bundle_dir);
  const preflab::LevelSetIndex ls = preflab::build_level_sets(bundle.fp);
  const preflab::PsiMap psi = preflab::build_psi(bundle.true_policy, bundle.fp, ls);
  const preflab::AdapterMap adapter = preflab::build_centroid_adapter(psi, bundle.fp.theta);
  const double err =
      preflab::verify_reconstruction(bundle.true_policy, bundle.fp, adapter, bundle.beta);
  if (!out_path.empty()) preflab::save_adapter(adapter, out_path);
  std::cout << "level sets: " << ls.num_classes()
            << ", reconstruction sup-norm reward error: " << err << "\n";
  if (!out_path.empty()) std::cout << "wrote adapter to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale laboratory for proxy-then-true preference learning"};
  app.require_subcommand(1);
  // Let `lab <cmd> --seed N` reach the global options below.
  app.fallthrough();

  std::uint64_t seed = 0;
  const CLI::Option* seed_opt = app.add_option("--seed", seed, "Override the base seed");
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads for `run`");

  std::string gen_config, gen_out = "bundle_out";
  CLI::App* gen = app.add_subcommand("generate", "Generate a certified instance bundle");
  gen->add_option("--config", gen_config, "Instance config JSON (sizes, beta, seed, note)");
  gen->add_option("--out", gen_out, "Output directory");

  std::string run_config, run_out;
  CLI::App* run = app.add_subcommand("run", "Run the learning-curve experiment");
  run->add_option("--config", run_config, "Experiment config JSON");
  run->add_option("--out", run_out, "Output directory (overrides config output_dir)");

  std::string bounds_inputs;
  CLI::App* bnd = app.add_subcommand("bounds", "Evaluate sample-complexity bounds");
  bnd->add_option("--inputs", bounds_inputs, "BoundInputs JSON file")->required();

  std::string check_bundle;
  CLI::App* chk = app.add_subcommand("check", "Re-run transfer condition checks on a bundle");
  chk->add_option("--bundle", check_bundle, "Bundle directory")->required();

  std::string oracle_bundle, oracle_out;
  CLI::App* orc = app.add_subcommand("adapter-oracle", "Construct the centroid adapter");
  orc->add_option("--bundle", oracle_bundle, "Bundle directory")->required();
  orc->add_option("--out", oracle_out, "Write the adapter JSON here");

  CLI11_PARSE(app, argc, argv);
  const bool has_seed = seed_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_generate(gen_config, gen_out, seed, has_seed);
    if (run->parsed()) return cmd_run(run_config, run_out, threads, seed, has_seed);
    if (bnd->parsed()) return cmd_bounds(bounds_inputs);
    if (chk->parsed()) return cmd_check(check_bundle, seed, has_seed);
    if (orc->parsed()) return cmd_adapter_oracle(oracle_bundle, oracle_out);
  } catch (const std::exception& e) {
    std::cerr << "lab: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
