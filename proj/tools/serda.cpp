// serda: synthetic corpus generation, training, evaluation, ablation, latent
// export and augmentation preview.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "serda/augment.hpp"
#include "serda/config.hpp"
#include "serda/error.hpp"
#include "serda/experiment.hpp"
#include "serda/metrics.hpp"
#include "serda/params.hpp"
#include "serda/rng.hpp"
#include "serda/wav_io.hpp"

namespace fs = std::filesystem;
using namespace serda;

namespace {

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output;
};

void add_config_options(CLI::App* cmd, ConfigOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON run config");
  cmd->add_option("--set", o.overrides, "override one config key, key=value (repeatable)");
  cmd->add_option("--output", o.output, "output directory");
  cmd->footer(config_help());
}

RunConfig resolve_config(const ConfigOptions& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  for (const auto& s : o.overrides) apply_override(c, s);
  c.validate();
  return c;
}

fs::path output_dir(const ConfigOptions& o, const RunConfig& c, const char* command) {
  fs::path dir = !o.output.empty() ? fs::path(o.output)
                 : !c.output_dir.empty() ? fs::path(c.output_dir)
                                         : default_output_root() / command;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

// Encoder, parameters and run config stored in a checkpoint.
struct Loaded {
  RunConfig config;
  Checkpoint ckpt;
};

Loaded load_trained(const std::string& path, const std::string& manifest) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
  Loaded l;
  l.ckpt = load_checkpoint(path);
  l.config = from_json(nlohmann::json::parse(l.ckpt.config_json));
  if (!manifest.empty()) l.config.data.manifest = manifest;
  return l;
}

int cmd_gen(const ConfigOptions& o, std::optional<std::size_t> per_domain, bool wav_paths) {
  RunConfig c = resolve_config(o);
  if (per_domain) c.synth.num_samples_per_domain = *per_domain;
  c.synth.validate();
  const fs::path dir = output_dir(o, c, "gen");
  Corpus corpus = generate_synthetic(c.synth);
  fs::create_directories(dir / "audio");
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& row = corpus.manifest.rows[i];
    const std::string name = std::string(to_string(row.domain)) + "_" + std::to_string(row.emotion) + "_" +
                             std::to_string(i) + ".wav";
    wav::save(dir / "audio" / name, corpus.waves[i]);
    if (wav_paths) row.path = "audio/" + name;
  }
  write_manifest(dir / "manifest.csv", corpus.manifest);
  std::cout << "wrote " << corpus.size() << " rows to " << (dir / "manifest.csv").string() << "\n";
  return 0;
}

int cmd_train(const ConfigOptions& o, const std::optional<std::string>& target_labeled,
              const std::optional<std::uint64_t>& seed, const std::string& manifest) {
  RunConfig c = resolve_config(o);
  if (target_labeled) c.train.target_labeled = parse_bool(*target_labeled);
  if (seed) c.train.seed = *seed;
  if (!manifest.empty()) c.data.manifest = manifest;
  c.validate();
  const fs::path dir = output_dir(o, c, "train");
  const std::string echo = to_json(c).dump(2) + "\n";
  write_text(dir / "config.echo", echo);

  const Corpus corpus = prepare_corpus(c);
  std::ofstream log(dir / "train.log.jsonl", std::ios::binary);
  if (!log) throw IoError("cannot write " + (dir / "train.log.jsonl").string());
  const ExperimentResult r = run_experiment(c, corpus, &log);

  save_checkpoint(dir / "best.ckpt", Checkpoint{to_json(c).dump(), r.report.best_params});
  nlohmann::ordered_json report = r.uar_report;
  report["epoch_pairs"] = r.report.epoch_pairs;
  report["best_epoch_pair"] = r.report.best_epoch_pair;
  report["best_val_accuracy"] = r.report.best_val_accuracy;
  report["total_steps"] = r.report.total_steps;
  write_text(dir / "uar.json", report.dump(2) + "\n");
  std::cout << "target UAR " << r.report.target_uar << " after " << r.report.epoch_pairs << " epoch pairs -> "
            << dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const std::string& domain,
             const std::string& split_name, const std::string& output) {
  const Loaded l = load_trained(checkpoint, manifest);
  const Corpus corpus = prepare_corpus(l.config);
  const Encoder encoder(l.config.encoder);
  const ConfusionMatrix cm = evaluate(encoder, l.ckpt.params, corpus, parse_domain(domain), parse_split(split_name));
  const std::string text = uar_report(cm).dump(2) + "\n";
  if (!output.empty()) {
    fs::create_directories(output);
    write_text(fs::path(output) / "uar.json", text);
  }
  std::cout << text;
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_ablate(const ConfigOptions& o, const std::string& specs_arg, const std::string& seeds_arg, std::size_t jobs) {
  const RunConfig base = resolve_config(o);
  std::vector<AblationSpec> specs;
  for (const auto& s : split_list(specs_arg)) specs.push_back(parse_ablation(s));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(seeds_arg)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + s + "'");
    }
  }
  if (specs.empty() || seeds.empty()) throw ConfigError("ablate needs at least one spec and one seed");
  const fs::path dir = output_dir(o, base, "ablate");
  write_text(dir / "config.echo", to_json(base).dump(2) + "\n");

  for (AblationSpec s : specs) {
    std::cout << "audit " << to_string(s) << ": changes";
    const auto diff = config_diff(base, apply_ablation(s, base));
    if (diff.empty()) std::cout << " nothing";
    for (const auto& k : diff) std::cout << ' ' << k;
    std::cout << " (plus train.seed)\n";
  }
  const auto rows = run_ablation(specs, base, seeds, jobs, [](const AblationRow& r) {
    std::cout << to_string(r.spec) << " seed " << r.seed << " uar " << r.uar << std::endl;
  });
  write_text(dir / "ablation.csv", format_ablation_csv(rows));
  std::cout << "wrote " << (dir / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_export_latents(const std::string& checkpoint, const std::string& manifest, const std::string& domain,
                       const std::string& split_name, const std::string& output) {
  const Loaded l = load_trained(checkpoint, manifest);
  const Corpus corpus = prepare_corpus(l.config);
  const Encoder encoder(l.config.encoder);
  const Split sp = parse_split(split_name);
  std::vector<LatentRow> rows;
  for (Domain d : {Domain::Source, Domain::Target}) {
    if (domain != "both" && parse_domain(domain) != d) continue;
    auto part = export_latents(encoder, l.ckpt.params, corpus, d, sp);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const fs::path dir = output.empty() ? fs::path(checkpoint).parent_path() : fs::path(output);
  if (!dir.empty()) fs::create_directories(dir);
  write_text(dir / "latents.csv", format_latents_csv(rows));
  std::cout << "wrote " << rows.size() << " rows to " << (dir / "latents.csv").string() << "\n";
  return 0;
}

int cmd_augment(const std::string& input, std::optional<int> pipeline, std::uint64_t seed, const std::string& output,
                bool pcm16) {
  const Waveform w = wav::load(input);
  KeyedRng rng = augment::view_rng(seed, 0, 0, 0);
  const int id = pipeline ? *pipeline : static_cast<int>(rng.below(augment::kNumPipelines));
  const auto r = augment::apply_pipeline(w, id, rng);
  wav::save(output, r.wave, pcm16 ? wav::Encoding::Pcm16 : wav::Encoding::Float32);
  std::cout << r.label << ' ' << augment::pipeline_name(r.label) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multitask domain adaptation for speech emotion recognition"};
  app.require_subcommand(1);

  ConfigOptions gen_opts, train_opts, ablate_opts;

  auto* gen = app.add_subcommand("gen", "write the synthetic corpus (manifest.csv, audio/*.wav)");
  add_config_options(gen, gen_opts);
  std::optional<std::size_t> per_domain;
  bool wav_paths = false;
  gen->add_option("--num-per-domain", per_domain, "clips per domain (synth.num_samples_per_domain)");
  gen->add_flag("--wav-paths", wav_paths, "point manifest rows at the written WAVs instead of synth:// paths");

  auto* train = app.add_subcommand("train", "train and write config.echo, train.log.jsonl, best.ckpt, uar.json");
  add_config_options(train, train_opts);
  std::optional<std::string> target_labeled;
  std::optional<std::uint64_t> seed;
  std::string train_manifest;
  train->add_option("--target-labeled", target_labeled, "true or false (train.target_labeled)");
  train->add_option("--seed", seed, "train.seed");
  train->add_option("--manifest", train_manifest, "data.manifest");

  std::string ckpt, manifest, domain = "target", split_name = "test", out;
  auto* eval = app.add_subcommand("eval", "UAR report of a checkpoint on one split");
  eval->add_option("--checkpoint", ckpt, "best.ckpt from train")->required();
  eval->add_option("--manifest", manifest, "manifest (default: the one the checkpoint was trained on)");
  eval->add_option("--domain", domain, "source or target")->capture_default_str();
  eval->add_option("--split", split_name, "train, val or test")->capture_default_str();
  eval->add_option("--output", out, "also write uar.json here");

  auto* ablate = app.add_subcommand("ablate", "loss ablation over seeds, writes ablation.csv");
  add_config_options(ablate, ablate_opts);
  std::string specs_arg = "full,no_labels,no_aug,no_im_and_aug,no_cont_and_aug", seeds_arg = "1,2,3,4,5";
  std::size_t jobs = 1;
  ablate->add_option("--specs", specs_arg, "comma-separated ablation rows")->capture_default_str();
  ablate->add_option("--seeds", seeds_arg, "comma-separated seeds")->capture_default_str();
  ablate->add_option("--jobs", jobs, "parallel runs")->capture_default_str();

  std::string lat_domain = "target", lat_split = "test";
  auto* latents = app.add_subcommand("export-latents", "write pooled embeddings h to latents.csv");
  latents->add_option("--checkpoint", ckpt, "best.ckpt from train")->required();
  latents->add_option("--manifest", manifest, "manifest (default: the one the checkpoint was trained on)");
  latents->add_option("--domain", lat_domain, "source, target or both")->capture_default_str();
  latents->add_option("--split", lat_split, "train, val or test")->capture_default_str();
  latents->add_option("--output", out, "output directory (default: next to the checkpoint)");

  std::string aug_in, aug_out;
  std::optional<int> pipeline;
  std::uint64_t aug_seed = 0;
  bool pcm16 = false;
  auto* aug = app.add_subcommand("augment", "apply one augmentation pipeline to a WAV; prints the label");
  aug->add_option("--input", aug_in, "input WAV")->required();
  aug->add_option("--output", aug_out, "output WAV")->required();
  aug->add_option("--pipeline", pipeline, "pipeline 0-4 (default: drawn from the seed)")->check(CLI::Range(0, 4));
  aug->add_option("--seed", aug_seed, "RNG seed")->capture_default_str();
  aug->add_flag("--pcm16", pcm16, "write 16-bit PCM instead of float32");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(gen_opts, per_domain, wav_paths);
    if (*train) return cmd_train(train_opts, target_labeled, seed, train_manifest);
    if (*eval) return cmd_eval(ckpt, manifest, domain, split_name, out);
    if (*ablate) return cmd_ablate(ablate_opts, specs_arg, seeds_arg, jobs);
    if (*latents) return cmd_export_latents(ckpt, manifest, lat_domain, lat_split, out);
    if (*aug) return cmd_augment(aug_in, pipeline, aug_seed, aug_out, pcm16);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
