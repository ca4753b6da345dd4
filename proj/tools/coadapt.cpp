// Copyright 2026 The coadapt Authors
// SPDX-License-Identifier: Apache-2.0
//
// coadapt command-line tool: dataset generation, training, simulation,
// evaluation and the session server.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "coadapt/checkpoint.hpp"
#include "coadapt/io.hpp"
#include "coadapt/pipeline.hpp"
#include "coadapt/service.hpp"

using namespace coadapt;

namespace {

constexpr const char* kDefaultStore = "coadapt-store";

void log_line(const std::string& line) { std::cerr << line << '\n'; }

PipelineConfig config_or_default(const std::string& path) {
  return path.empty() ? PipelineConfig{} : load_pipeline_config(path);
}

PreferenceModel preference_from(const std::string& path, const ModelBundle* bundle) {
  if (!path.empty()) return PreferenceModel::load(load_checkpoint(path));
  if (bundle != nullptr && bundle->preference) return *bundle->preference;
  throw std::runtime_error("no preference model: pass --preference or use a bundle that contains one");
}

Json summary_json(const EvalSummary& s, bool per_session) {
  Json j{{"sessions", s.sessions.size()},
         {"mean_rounds", s.mean_rounds},
         {"acceptance", s.acceptance},
         {"mean_round1_diversity", s.mean_round1_diversity},
         {"mean_consecutive_cosine", s.mean_consecutive_cosine},
         {"mean_final_preference", s.mean_final_preference}};
  if (per_session) {
    Json rows = Json::array();
    for (const SessionMetrics& m : s.sessions) {
      rows.push_back({{"target", to_json(m.target)},
                      {"initial", to_json(m.initial)},
                      {"seed", seed_to_string(m.seed)},
                      {"rounds", m.rounds},
                      {"accepted", m.accepted},
                      {"round1_diversity", m.round1_diversity},
                      {"consecutive_cosine", std::isnan(m.consecutive_cosine) ? Json(nullptr) : Json(m.consecutive_cosine)},
                      {"final_preference", m.final_preference}});
    }
    j["per_session"] = rows;
  }
  return j;
}

std::vector<double> rounds_of(const EvalSummary& s) {
  std::vector<double> out;
  for (const auto& m : s.sessions) out.push_back(m.rounds);
  return out;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw std::runtime_error("--addr must be host:port");
  return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coadapt: feedback-driven multi-round image generation on a synthetic sprite world"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "write preference-pair and dialogue datasets");
  std::string data_out;
  DatagenOptions dopt;
  datagen->add_option("--out", data_out, "output directory")->required();
  datagen->add_option("--pairs", dopt.pairs, "preference pairs");
  datagen->add_option("--dialogues", dopt.dialogues, "dialogues");
  datagen->add_option("--max-rounds", dopt.max_rounds, "round cap per dialogue");
  datagen->add_option("--seed", dopt.seed, "seed");

  // train-diffusion
  auto* train_diff = app.add_subcommand("train-diffusion", "pretrain the autoencoder and the denoiser");
  std::string diff_out;
  train_diff->add_option("--out", diff_out, "checkpoint to write")->required();

  // train-preference
  auto* train_pref = app.add_subcommand("train-preference", "train the preference model on a pairs file");
  std::string pairs_path, pref_out;
  train_pref->add_option("--pairs", pairs_path, "pairs.jsonl")->required()->check(CLI::ExistingFile);
  train_pref->add_option("--out", pref_out, "checkpoint to write")->required();

  // finetune-rewards
  auto* finetune = app.add_subcommand("finetune-rewards", "reward fine-tuning with adapters");
  std::string ft_base, ft_pref, ft_dialogues, ft_out, ft_log;
  finetune->add_option("--base", ft_base, "pretrained denoiser checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--preference", ft_pref, "preference checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--dialogues", ft_dialogues, "dialogues.jsonl")->required()->check(CLI::ExistingFile);
  finetune->add_option("--out", ft_out, "bundle to write")->required();
  finetune->add_option("--log", ft_log, "write one JSON step report per line");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run seeded simulated-user sessions");
  std::string sim_model, sim_pref;
  int sim_sessions = 100;
  bool sim_per_session = false;
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--model", sim_model, "denoiser checkpoint or bundle")->required()->check(CLI::ExistingFile);
  simulate->add_option("--preference", sim_pref, "preference checkpoint")->check(CLI::ExistingFile);
  simulate->add_option("--sessions", sim_sessions, "number of sessions");
  simulate->add_option("--seed", sim_seed, "evaluation seed");
  simulate->add_flag("--per-session", sim_per_session, "include per-session rows");

  // eval
  auto* eval = app.add_subcommand("eval", "fine-tune with one reward removed and compare against the full setup");
  std::string ev_ablation = "none", ev_base, ev_pref, ev_dialogues;
  eval->add_option("--ablation", ev_ablation, "reward forced to zero")
      ->check(CLI::IsMember({"div", "cons", "mi", "none"}));
  eval->add_option("--base", ev_base, "pretrained denoiser checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--preference", ev_pref, "preference checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--dialogues", ev_dialogues, "dialogues.jsonl")->required()->check(CLI::ExistingFile);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP session service");
  std::string addr = "127.0.0.1:8080", store_path, serve_model, serve_pref;
  int serve_rounds = 10;
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--store", store_path, "store directory (default $COADAPT_STORE, then ./coadapt-store)");
  serve->add_option("--model", serve_model, "denoiser checkpoint or bundle")->required()->check(CLI::ExistingFile);
  serve->add_option("--preference", serve_pref, "preference checkpoint")->check(CLI::ExistingFile);
  serve->add_option("--max-rounds", serve_rounds, "default round budget");

  CLI11_PARSE(app, argc, argv);

  try {
    const PipelineConfig cfg = config_or_default(config_path);

    if (*datagen) {
      const DatagenSummary s = write_datasets(data_out, dopt);
      std::cout << Json{{"pair_lines", s.pair_lines}, {"dialogue_lines", s.dialogue_lines}, {"images", s.images}}.dump()
                << '\n';
    } else if (*train_diff) {
      const DenoiserModel model = pretrain_denoiser(cfg, log_line);
      save_bundle(diff_out, model, nullptr, nullptr);
    } else if (*train_pref) {
      const auto pairs = load_pairs(pairs_path);
      const PreferenceModel model = train_preference_model(cfg, pairs, log_line);
      Checkpoint ckpt;
      model.save(ckpt);
      save_checkpoint(ckpt, pref_out);
    } else if (*finetune) {
      const ModelBundle base = load_bundle(ft_base);
      const PreferenceModel pref = PreferenceModel::load(load_checkpoint(ft_pref));
      const FinetuneResult result = finetune_rewards(cfg, base.model, pref, load_dialogues(ft_dialogues), log_line);
      if (!ft_log.empty()) {
        std::ofstream out(ft_log);
        for (const StepReport& r : result.reports) out << to_json(r).dump() << '\n';
      }
      save_bundle(ft_out, result.model, &result.adapters, &pref);
    } else if (*simulate) {
      const ModelBundle bundle = load_bundle(sim_model);
      const PreferenceModel pref = preference_from(sim_pref, &bundle);
      const NoiseSchedule schedule = cfg.schedule.build();
      EvalConfig ec = cfg.eval;
      ec.sessions = sim_sessions;
      if (sim_seed) ec.seed = *sim_seed;
      const GenerationContext ctx{&bundle.model, bundle.adapters.empty() ? nullptr : &bundle.adapters, &schedule, &pref,
                                  false};
      std::cout << summary_json(evaluate_sessions(ctx, ec), sim_per_session).dump(2) << '\n';
    } else if (*eval) {
      const ModelBundle base = load_bundle(ev_base);
      const PreferenceModel pref = PreferenceModel::load(load_checkpoint(ev_pref));
      const auto records = load_dialogues(ev_dialogues);
      const NoiseSchedule schedule = cfg.schedule.build();

      log_line("eval: frozen baseline");
      const GenerationContext frozen_ctx{&base.model, nullptr, &schedule, &pref, false};
      const EvalSummary frozen = evaluate_sessions(frozen_ctx, cfg.eval);

      log_line("eval: full configuration");
      const FinetuneResult full = finetune_rewards(cfg, base.model, pref, records, log_line);
      const GenerationContext full_ctx{&full.model, &full.adapters, &schedule, &pref, false};
      const EvalSummary full_eval = evaluate_sessions(full_ctx, cfg.eval);
      const SignTest st = sign_test(rounds_of(full_eval), rounds_of(frozen));

      Json report{{"ablation", ev_ablation},
                  {"frozen", summary_json(frozen, false)},
                  {"full", summary_json(full_eval, false)},
                  {"rounds_sign_test",
                   {{"wins", st.wins}, {"losses", st.losses}, {"ties", st.ties}, {"p_value", st.p_value}}}};
      if (ev_ablation != "none") {
        PipelineConfig ablated = cfg;
        if (ev_ablation == "div") ablated.finetune.mask.div = false;
        if (ev_ablation == "cons") ablated.finetune.mask.cons = false;
        if (ev_ablation == "mi") ablated.finetune.mask.mi = false;
        log_line("eval: lambda_" + ev_ablation + " = 0");
        const FinetuneResult abl = finetune_rewards(ablated, base.model, pref, records, log_line);
        const GenerationContext abl_ctx{&abl.model, &abl.adapters, &schedule, &pref, false};
        report["ablated"] = summary_json(evaluate_sessions(abl_ctx, cfg.eval), false);
      }
      std::cout << report.dump(2) << '\n';
    } else if (*serve) {
      if (store_path.empty()) {
        const char* env = std::getenv("COADAPT_STORE");
        store_path = env != nullptr && *env != '\0' ? env : kDefaultStore;
      }
      const ModelBundle bundle = load_bundle(serve_model);
      std::optional<PreferenceModel> pref;
      if (!serve_pref.empty() || bundle.preference) pref = preference_from(serve_pref, &bundle);
      const NoiseSchedule schedule = cfg.schedule.build();
      SessionStore store(store_path);
      const GenerationContext ctx{&bundle.model, bundle.adapters.empty() ? nullptr : &bundle.adapters, &schedule,
                                  pref ? &*pref : nullptr, true};
      SessionService service(store, ctx, serve_rounds);
      const auto [host, port] = split_addr(addr);
      log_line("serving on " + host + ":" + std::to_string(port) + ", store " + store_path);
      run_http_server(service, host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
