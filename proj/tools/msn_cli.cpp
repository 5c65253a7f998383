// msn: command-line driver for data generation, tokenizer and LM training,
// decoding and evaluation.  Every command writes its outputs plus a
// resolved_config.json into --out.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "msn/msn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json default_config(const std::string& preset) {
  msn::TokenizerConfig tk;
  if (preset == "desk") {
    tk = msn::TokenizerConfig::desk();
  } else if (preset == "toy") {
    tk = msn::TokenizerConfig::toy();
  } else if (preset == "paper") {
    tk = msn::TokenizerConfig::paper();
  } else {
    throw msn::InvalidArgument("unknown preset '" + preset + "' (expected desk, toy or paper)");
  }
  json j = tk.to_json();
  j.erase("train.seed");
  j.update(msn::LmConfig{}.to_json());
  j.update(json{
      {"seed", 0u},
      {"data.n_classes", 4u},
      {"data.steps", tk.seq_len},
      {"data.dim", tk.latent_dim},
      {"data.noise_std", 0.05},
      {"data.per_class", 16u},
      {"data.heldout_per_class", 8u},
      {"data.bimodal_class", -1},
      {"lmtrain.lr", 1e-3},
      {"lmtrain.weight_decay", 0.0},
      {"lmtrain.steps", 1000u},
      {"lmtrain.batch_size", 8u},
      {"lmtrain.c_z", msn::kDefaultZLoss},
      {"lmtrain.base_steps", 0u},
      {"lmtrain.embed_init_scale", 0.02},
      {"lmtrain.audio_size", tk.codebook_size},
      {"gen.max_len", 128u},
      {"gen.temperature", 1.0},
      {"gen.top_k", 0u},
      {"gen.constrain_audio", true},
      {"gen.count", 1u},
      {"eval.sample_steps", tk.sample_steps},
      {"report.clip_seconds", 10.0},
  });
  return j;
}

bool deterministic_env() {
  const char* v = std::getenv("MSN_DETERMINISTIC");
  return v && std::string(v) == "1";
}

struct Run {
  std::string command;
  std::string config_file;
  std::string preset = "desk";
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  json cfg;

  template <class U>
  U get(const char* key) const {
    return msn::config_get<U>(cfg, key);
  }

  std::uint64_t seed() const { return get<std::uint64_t>("seed"); }

  std::string out(const std::string& name) const { return (fs::path(out_dir) / name).string(); }

  msn::TokenizerConfig tokenizer_config() const {
    json t;
    const json keys = msn::TokenizerConfig{}.to_json();
    for (auto it = keys.begin(); it != keys.end(); ++it) {
      if (cfg.contains(it.key())) t[it.key()] = cfg.at(it.key());
    }
    t["train.seed"] = seed();
    return msn::TokenizerConfig::from_json(t);
  }

  msn::LmConfig lm_config() const {
    json t;
    const json keys = msn::LmConfig{}.to_json();
    for (auto it = keys.begin(); it != keys.end(); ++it) t[it.key()] = cfg.at(it.key());
    return msn::LmConfig::from_json(t);
  }

  std::string config_hash() const { return msn::io::sha256_hex(cfg.dump()); }
};

// Later sources win: preset defaults, config file, --set, explicit flags.
void resolve(Run& run, const std::vector<std::string>& flag_overrides) {
  run.cfg = default_config(run.preset);
  if (!run.config_file.empty()) msn::merge_config(run.cfg, msn::io::read_json(run.config_file));
  for (const auto& o : run.overrides) msn::apply_override(run.cfg, o);
  for (const auto& o : flag_overrides) msn::apply_override(run.cfg, o);
  fs::create_directories(run.out_dir);
  json resolved = run.cfg;
  resolved["command"] = run.command;
  resolved["deterministic"] = deterministic_env();
  resolved["config_hash"] = run.config_hash();
  msn::io::write_json(run.out("resolved_config.json"), resolved);
}

void print_metrics(const msn::io::MetricsSink& m) {
  const json summary = m.summary();
  for (auto split = summary.begin(); split != summary.end(); ++split) {
    for (auto it = split->begin(); it != split->end(); ++it) {
      std::printf("%s %s %s\n", split.key().c_str(), it.key().c_str(), it.value().dump().c_str());
    }
  }
}

msn::LatentDataset load_data(const std::string& path) { return msn::io::load_latents(path); }

// ---- commands ----------------------------------------------------------

int cmd_gen_data(const Run& run) {
  msn::SyntheticLatentSpec spec;
  spec.n_classes = run.get<std::size_t>("data.n_classes");
  spec.steps = run.get<std::size_t>("data.steps");
  spec.dim = run.get<std::size_t>("data.dim");
  spec.noise_std = run.get<double>("data.noise_std");
  spec.seed = run.seed();
  const auto bimodal = run.get<std::int64_t>("data.bimodal_class");
  if (bimodal >= 0) spec.bimodal_class = static_cast<std::size_t>(bimodal);
  auto train = msn::gen_latent_dataset(spec, run.get<std::size_t>("data.per_class"));
  spec.sample_offset = std::uint64_t{1} << 32;
  auto heldout = msn::gen_latent_dataset(spec, run.get<std::size_t>("data.heldout_per_class"));
  msn::io::save_latents(train, run.out("train.msnl"));
  msn::io::save_latents(heldout, run.out("heldout.msnl"));
  std::printf("wrote %zu training and %zu held-out latents (%zux%zu) to %s\n", train.size(), heldout.size(), spec.steps,
              spec.dim, run.out_dir.c_str());
  return 0;
}

int cmd_train_tokenizer(const Run& run, const std::string& data_path) {
  const auto cfg = run.tokenizer_config();
  auto data = load_data(data_path);
  msn::Rng rng = msn::substream(run.seed(), 1);
  msn::Init init{&rng, false};
  msn::TokenizerModel<float> model(cfg, init);
  const auto ckpt = run.out("tokenizer.msnc");
  auto report = msn::train_tokenizer(data, model, ckpt);
  msn::io::save_tokenizer(model, ckpt);
  report.metrics.write_csv(run.out("metrics.csv"));
  auto params = model.parameters();
  json summary{{"objective", msn::objective_name(cfg.objective)},
               {"epochs_completed", report.epochs_completed},
               {"steps", report.steps.size()},
               {"codebook_restarts", report.restarts},
               {"parameters", msn::count_elements(params)},
               {"metrics", report.metrics.summary()},
               {"diverged", report.diverged}};
  msn::io::write_json(run.out("summary.json"), summary);
  print_metrics(report.metrics);
  if (report.diverged) {
    std::fprintf(stderr, "error: %s; last good parameters kept in %s\n", report.divergence_message.c_str(), ckpt.c_str());
    return 2;
  }
  return 0;
}

int cmd_encode(const Run& run, const std::string& model_path, const std::string& data_path) {
  auto model = msn::io::load_tokenizer<float>(model_path);
  auto data = load_data(data_path);
  std::vector<msn::PairRecord> pairs;
  for (std::size_t i = 0; i < data.size(); ++i) {
    msn::PairRecord p;
    msn::Rng rng = msn::substream(run.seed(), i);
    const auto label = data.labels[i];
    p.caption = msn::gen_caption(label, rng);
    p.audio_tokens = model->encode_to_tokens(data.sample(i), 1);
    p.label = std::string(msn::sound_event(label).noun);
    p.instruction = "What sound is this?";
    p.answer = p.caption;
    pairs.push_back(std::move(p));
  }
  msn::io::save_pairs(pairs, run.out("pairs.jsonl"));
  std::printf("encoded %zu latents into %zu tokens each\n", pairs.size(), data.steps);
  return 0;
}

std::uint16_t label_index(const std::optional<std::string>& noun) {
  if (!noun) return 0;
  for (std::size_t i = 0; i < msn::kSoundEvents.size(); ++i) {
    if (msn::kSoundEvents[i].noun == *noun) return static_cast<std::uint16_t>(i);
  }
  return 0;
}

int cmd_decode(const Run& run, const std::string& model_path, const std::string& pairs_path) {
  auto model = msn::io::load_tokenizer<float>(model_path);
  auto pairs = msn::io::load_pairs(pairs_path);
  if (pairs.empty()) throw msn::InvalidArgument("decode: no pairs in " + pairs_path);
  const auto steps = run.get<std::size_t>("eval.sample_steps");
  msn::LatentDataset out{pairs.front().audio_tokens.size(), model->config().latent_dim, {}, {}};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    msn::Rng rng = msn::substream(run.seed(), i);
    auto z = model->decode_latent(pairs[i].audio_tokens, steps, rng);
    out.append(z.values, label_index(pairs[i].label));
  }
  msn::io::save_latents(out, run.out("decoded.msnl"));
  std::printf("decoded %zu token sequences with %zu steps\n", pairs.size(), steps);
  return 0;
}

int cmd_train_lm(const Run& run, const std::string& pairs_path, const std::string& stage_name, const std::string& init_path) {
  const auto stage = msn::parse_stage(stage_name);
  auto pairs = msn::io::load_pairs(pairs_path);
  if (pairs.empty()) throw msn::InvalidArgument("train-lm: no pairs in " + pairs_path);
  msn::LmTrainConfig tc;
  tc.lr = run.get<double>("lmtrain.lr");
  tc.weight_decay = run.get<double>("lmtrain.weight_decay");
  tc.steps = run.get<std::size_t>("lmtrain.steps");
  tc.batch_size = run.get<std::size_t>("lmtrain.batch_size");
  tc.c_z = run.get<double>("lmtrain.c_z");
  tc.seed = run.seed();

  std::unique_ptr<msn::LanguageModel<float>> model;
  msn::io::MetricsSink base_metrics;
  if (!init_path.empty()) {
    model = msn::io::load_lm<float>(init_path);
    if (!model->extended()) throw msn::InvalidArgument("train-lm: initial model has no audio vocabulary");
  } else {
    msn::Rng rng = msn::substream(run.seed(), 2);
    msn::Init init{&rng, false};
    model = std::make_unique<msn::LanguageModel<float>>(run.lm_config(), init);
    const auto base_steps = run.get<std::size_t>("lmtrain.base_steps");
    if (base_steps > 0) {
      auto base_cfg = tc;
      base_cfg.steps = base_steps;
      const msn::Vocab text_vocab = model->vocab();
      auto source = [&](std::size_t i, msn::Rng&) { return msn::build_text_example(text_vocab, pairs[i].caption); };
      base_metrics = msn::train_lm(*model, source, pairs.size(), base_cfg, "base").metrics;
    }
    model->extend_vocab(run.get<std::size_t>("lmtrain.audio_size"), run.get<double>("lmtrain.embed_init_scale"), rng);
    model->enable_lora(rng);
  }
  const msn::Vocab vocab = model->vocab();
  auto build = [&](std::size_t i, msn::Rng& rng) {
    const auto& p = pairs[i];
    if (stage == msn::Stage::pretrain) return msn::build_pretrain_example(vocab, p.caption, p.audio_tokens, rng);
    if (!p.instruction || !(p.answer || !p.answer_audio_tokens.empty())) {
      throw msn::FormatError("train-lm: fine-tune record " + std::to_string(i) + " lacks instruction/answer");
    }
    return msn::build_finetune_example(vocab, *p.instruction, p.audio_tokens, p.answer.value_or(""), p.answer_audio_tokens);
  };
  auto report = msn::train_lm(*model, build, pairs.size(), tc);

  std::vector<msn::FusionSequence> eval;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (stage == msn::Stage::pretrain) {
      eval.push_back(msn::build_pretrain_example(vocab, pairs[i].caption, pairs[i].audio_tokens, true));
      eval.push_back(msn::build_pretrain_example(vocab, pairs[i].caption, pairs[i].audio_tokens, false));
    } else {
      msn::Rng unused(0);
      eval.push_back(build(i, unused));
    }
  }
  const double acc = msn::next_token_accuracy(*model, eval);
  report.metrics.add(tc.steps, "train", "next_token_accuracy", acc);

  msn::io::MetricsSink all = base_metrics;
  for (const auto& r : report.metrics.rows()) all.add(r.step, r.split, r.metric, r.value);
  all.write_csv(run.out("metrics.csv"));
  msn::io::save_lm(*model, run.out("lm.msnc"));
  auto params = model->parameters();
  json summary{{"stage", msn::stage_name(stage)},
               {"vocab_size", vocab.size()},
               {"parameters", msn::count_elements(params)},
               {"trainable_parameters", msn::count_elements(params, true)},
               {"metrics", all.summary()}};
  msn::io::write_json(run.out("summary.json"), summary);
  print_metrics(all);
  return 0;
}

std::vector<std::int32_t> parse_codes(const std::string& text) {
  std::vector<std::int32_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw msn::InvalidArgument("bad audio code '" + item + "'");
    }
  }
  return out;
}

int cmd_generate(const Run& run, const std::string& model_path, const std::string& prompt_text,
                 const std::string& prompt_audio) {
  auto model = msn::io::load_lm<float>(model_path);
  const auto& vocab = model->vocab();
  msn::FusionSequence prompt;
  if (!prompt_text.empty()) prompt.push_text(vocab, prompt_text, 1.0f);
  const auto codes = parse_codes(prompt_audio);
  if (!codes.empty()) prompt.push_audio(vocab, codes, 1.0f);
  if (prompt.ids.empty()) throw msn::InvalidArgument("generate: give --prompt and/or --prompt-audio");
  msn::GenerateConfig g;
  g.max_len = run.get<std::size_t>("gen.max_len");
  g.temperature = run.get<double>("gen.temperature");
  g.top_k = run.get<std::size_t>("gen.top_k");
  g.constrain_audio = run.get<bool>("gen.constrain_audio");
  const auto count = run.get<std::size_t>("gen.count");
  std::string lines;
  std::size_t unclosed = 0, malformed = 0;
  for (std::size_t i = 0; i < count; ++i) {
    msn::Rng rng = msn::substream(run.seed(), i);
    auto r = msn::generate(*model, prompt.ids, g, rng);
    const bool ok = msn::audio_spans_well_formed(vocab, r.ids);
    unclosed += r.unclosed_audio;
    malformed += !ok;
    lines += json{{"text", vocab.render(r.ids)}, {"ids", r.ids}, {"unclosed_audio", r.unclosed_audio}}.dump() + "\n";
    if (count == 1) std::printf("%s\n", vocab.render(r.ids).c_str());
  }
  msn::io::write_text(run.out("generations.jsonl"), lines);
  msn::io::write_json(run.out("summary.json"), {{"count", count}, {"unclosed_audio", unclosed}, {"malformed", malformed}});
  std::printf("generated %zu sequences (%zu with unclosed audio, %zu malformed)\n", count, unclosed, malformed);
  return 0;
}

int cmd_eval(const Run& run, const std::string& model_path, const std::string& data_path, bool recon) {
  auto model = msn::io::load_tokenizer<float>(model_path);
  auto data = load_data(data_path);
  msn::CompareOptions opt;
  opt.n_steps = run.get<std::size_t>("eval.sample_steps");
  opt.seed = run.seed();
  opt.config_hash = run.config_hash();
  auto full = msn::evaluate_tokenizers<float>(data, {{model.get(), msn::objective_name(model->objective())}}, opt);
  msn::ComparisonReport report = full;
  report.rows.clear();
  for (const auto& r : full.rows) {
    if ((r.metric == "recon_mse") == recon) report.rows.push_back(r);
  }
  const std::string name = recon ? "recon" : "fad";
  msn::io::write_text(run.out(name + ".csv"), report.csv());
  msn::io::write_json(run.out(name + ".json"), report.json(msn::utc_timestamp()));
  std::fputs(report.csv().c_str(), stdout);
  return 0;
}

int cmd_compare(const Run& run, const std::string& fm_path, const std::string& mse_path, const std::string& data_path) {
  auto fm = msn::io::load_tokenizer<float>(fm_path);
  auto mse = msn::io::load_tokenizer<float>(mse_path);
  auto data = load_data(data_path);
  msn::CompareOptions opt;
  opt.n_steps = run.get<std::size_t>("eval.sample_steps");
  opt.seed = run.seed();
  opt.config_hash = run.config_hash();
  auto report = msn::compare_tokenizers(data, *fm, *mse, opt);
  msn::io::write_text(run.out("compare.csv"), report.csv());
  msn::io::write_json(run.out("compare.json"), report.json(msn::utc_timestamp()));
  std::fputs(report.csv().c_str(), stdout);
  return 0;
}

int cmd_grad_check(const Run& run) {
  std::string csv = "op,max_rel_error,tolerance,passed\n";
  bool all = true;
  for (const auto& r : msn::run_grad_suite(run.seed() + 1234)) {
    std::printf("%-20s %.3e  (< %.0e) %s\n", r.name.c_str(), r.max_rel_error, r.tolerance, r.passed() ? "ok" : "FAIL");
    csv += r.name + "," + msn::io::format_value(r.max_rel_error) + "," + msn::io::format_value(r.tolerance) + "," +
           (r.passed() ? "1" : "0") + "\n";
    all = all && r.passed();
  }
  msn::io::write_text(run.out("grad_check.csv"), csv);
  return all ? 0 : 2;
}

int cmd_report(const Run& run, const std::string& model_path) {
  const double seconds = run.get<double>("report.clip_seconds");
  const auto cfg = model_path.empty() ? run.tokenizer_config()
                                      : msn::TokenizerConfig::from_json(msn::io::read_json(msn::io::sidecar_path(model_path)).at("config"));
  const auto paper = msn::TokenizerConfig::paper();
  const double paper_bps = msn::bitrate(paper.seq_len, 10.0, paper.codebook_size);
  const double quoted_bps = 230.0;
  const double bps = msn::bitrate(cfg.seq_len, seconds, cfg.codebook_size);

  auto count_params = [](msn::TokenizerConfig c, msn::Objective o) {
    c.objective = o;
    std::size_t n = 0;
    for (auto& [name, shape] : msn::tokenizer_manifest(c)) n += msn::shape_numel(shape);
    return n;
  };
  const std::size_t n_params = count_params(cfg, msn::Objective::flow_matching);
  const std::size_t n_params_mse = count_params(cfg, msn::Objective::mse);

  json j{{"config", {{"tokens_per_clip", cfg.seq_len}, {"clip_seconds", seconds}, {"codebook_size", cfg.codebook_size},
                     {"bits_per_token", std::log2(static_cast<double>(cfg.codebook_size))}, {"bitrate_bps", bps},
                     {"parameters_fm", n_params}, {"parameters_mse", n_params_mse}}},
         {"paper_preset", {{"tokens_per_clip", paper.seq_len}, {"clip_seconds", 10.0}, {"codebook_size", paper.codebook_size},
                           {"bitrate_bps", paper_bps}, {"quoted_bps", quoted_bps},
                           {"deviation_bps", paper_bps - quoted_bps}}},
         {"note", "215 tokens per 10 s clip with an 8196-entry codebook gives 279.5 bps (0.28 kbps), not the quoted "
                  "0.23 kbps; the quoted figure would need about 177 tokens per clip or about 1600 codebook entries."}};
  msn::io::write_json(run.out("report.json"), j);
  std::printf("bitrate: %zu tokens x %.4f bits / %.1f s = %.1f bps\n", cfg.seq_len,
              std::log2(static_cast<double>(cfg.codebook_size)), seconds, bps);
  std::printf("paper preset: %.1f bps (%.2f kbps); quoted 0.23 kbps differs by %.1f bps\n", paper_bps, paper_bps / 1000.0,
              paper_bps - quoted_bps);
  std::printf("parameters: fm %zu, mse %zu\n", n_params, n_params_mse);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"msn: low-bitrate audio latent tokenizer and early-fusion LM toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Run run;
  std::uint64_t seed = 0;
  app.add_option("--config", run.config_file, "flat JSON config file")->check(CLI::ExistingFile);
  app.add_option("--preset", run.preset, "tokenizer preset: desk, toy or paper")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "run seed");
  app.add_option("--out", run.out_dir, "output directory")->capture_default_str();
  app.add_option("--set", run.overrides, "config override key=value (repeatable)");

  std::vector<std::string> flags;
  std::function<int()> action;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };

  auto* gen = add("gen-data", "generate synthetic latent datasets (train.msnl, heldout.msnl)");
  gen->callback([&] { action = [&] { return cmd_gen_data(run); }; });

  std::string data_path, model_path, objective, pairs_path, stage = "pretrain", init_path;
  auto* tt = add("train-tokenizer", "train a tokenizer on a latent file");
  tt->add_option("--data", data_path, "latent file")->required()->check(CLI::ExistingFile);
  auto* obj_opt = tt->add_option("--objective", objective, "decoder objective: fm or mse")->check(CLI::IsMember({"fm", "mse"}));
  tt->callback([&] {
    if (obj_opt->count()) flags.push_back("model.objective=" + objective);
    action = [&] { return cmd_train_tokenizer(run, data_path); };
  });

  auto* enc = add("encode", "encode latents into caption/token pairs (pairs.jsonl)");
  enc->add_option("--model", model_path, "tokenizer checkpoint")->required()->check(CLI::ExistingFile);
  enc->add_option("--data", data_path, "latent file")->required()->check(CLI::ExistingFile);
  enc->callback([&] { action = [&] { return cmd_encode(run, model_path, data_path); }; });

  std::size_t steps = 0;
  auto* dec = add("decode", "decode token sequences back to latents (decoded.msnl)");
  dec->add_option("--model", model_path, "tokenizer checkpoint")->required()->check(CLI::ExistingFile);
  dec->add_option("--pairs", pairs_path, "pairs JSONL with audio_tokens")->required()->check(CLI::ExistingFile);
  auto* steps_opt = dec->add_option("--steps", steps, "Euler steps for flow-matching decoding")->check(CLI::PositiveNumber);
  dec->callback([&] {
    if (steps_opt->count()) flags.push_back("eval.sample_steps=" + std::to_string(steps));
    action = [&] { return cmd_decode(run, model_path, pairs_path); };
  });

  auto* tl = add("train-lm", "train the fusion language model on pairs");
  tl->add_option("--pairs", pairs_path, "pairs JSONL")->required()->check(CLI::ExistingFile);
  tl->add_option("--stage", stage, "pretrain or finetune")->check(CLI::IsMember({"pretrain", "finetune"}))->capture_default_str();
  tl->add_option("--init", init_path, "LM checkpoint to continue from")->check(CLI::ExistingFile);
  tl->callback([&] { action = [&] { return cmd_train_lm(run, pairs_path, stage, init_path); }; });

  std::string prompt, prompt_audio;
  std::size_t max_len = 0, top_k = 0, count = 0;
  double temperature = 0.0;
  std::string constrain;
  auto* gn = add("generate", "sample continuations from a trained LM (generations.jsonl)");
  gn->add_option("--model", model_path, "LM checkpoint")->required()->check(CLI::ExistingFile);
  gn->add_option("--prompt", prompt, "text prompt");
  gn->add_option("--prompt-audio", prompt_audio, "comma-separated audio codes appended as <soa>..<eoa>");
  auto* ml = gn->add_option("--max-len", max_len, "total sequence length")->check(CLI::PositiveNumber);
  auto* tp = gn->add_option("--temperature", temperature, "sampling temperature, 0 for greedy")->check(CLI::NonNegativeNumber);
  auto* tk = gn->add_option("--top-k", top_k, "keep the k most likely tokens (0: all)");
  auto* ca = gn->add_option("--constrain-audio", constrain, "mask sampling to keep audio spans well formed")
                 ->check(CLI::IsMember({"true", "false"}));
  auto* cn = gn->add_option("--count", count, "number of sequences")->check(CLI::PositiveNumber);
  gn->callback([&] {
    if (ml->count()) flags.push_back("gen.max_len=" + std::to_string(max_len));
    if (tp->count()) flags.push_back("gen.temperature=" + msn::io::format_value(temperature));
    if (tk->count()) flags.push_back("gen.top_k=" + std::to_string(top_k));
    if (ca->count()) flags.push_back("gen.constrain_audio=" + constrain);
    if (cn->count()) flags.push_back("gen.count=" + std::to_string(count));
    action = [&] { return cmd_generate(run, model_path, prompt, prompt_audio); };
  });

  for (auto [name, recon] : {std::pair{"eval-recon", true}, std::pair{"eval-fad", false}}) {
    auto* ev = add(name, recon ? "reconstruction error per split (recon.csv)" : "Frechet distance per split (fad.csv)");
    ev->add_option("--model", model_path, "tokenizer checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data_path, "held-out latent file")->required()->check(CLI::ExistingFile);
    auto* so = ev->add_option("--steps", steps, "Euler steps for flow-matching decoding")->check(CLI::PositiveNumber);
    ev->callback([&, recon = recon, so] {
      if (so->count()) flags.push_back("eval.sample_steps=" + std::to_string(steps));
      action = [&, recon] { return cmd_eval(run, model_path, data_path, recon); };
    });
  }

  std::string fm_path, mse_path;
  auto* cmp = add("compare", "compare FM and MSE tokenizers on held-out data (compare.csv)");
  cmp->add_option("--fm", fm_path, "flow-matching tokenizer checkpoint")->required()->check(CLI::ExistingFile);
  cmp->add_option("--mse", mse_path, "MSE tokenizer checkpoint")->required()->check(CLI::ExistingFile);
  cmp->add_option("--data", data_path, "held-out latent file")->required()->check(CLI::ExistingFile);
  auto* cs = cmp->add_option("--steps", steps, "Euler steps for flow-matching decoding")->check(CLI::PositiveNumber);
  cmp->callback([&] {
    if (cs->count()) flags.push_back("eval.sample_steps=" + std::to_string(steps));
    action = [&] { return cmd_compare(run, fm_path, mse_path, data_path); };
  });

  auto* gc = add("grad-check", "finite-difference check of every differentiable op");
  gc->callback([&] { action = [&] { return cmd_grad_check(run); }; });

  auto* rp = add("report", "bitrate and model-size report (report.json)");
  rp->add_option("--model", model_path, "tokenizer checkpoint (default: preset config)")->check(CLI::ExistingFile);
  rp->callback([&] { action = [&] { return cmd_report(run, model_path); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    run.command = app.get_subcommands().front()->get_name();
    if (seed_opt->count()) flags.insert(flags.begin(), "seed=" + std::to_string(seed));
    resolve(run, flags);
  } catch (const msn::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\nRun with --help for more information.\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
