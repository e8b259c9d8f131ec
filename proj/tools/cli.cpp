#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "geoskill/config.hpp"
#include "geoskill/evolution.hpp"
#include "geoskill/expert_compiler.hpp"
#include "geoskill/hashing.hpp"
#include "geoskill/jsonl.hpp"
#include "geoskill/library_io.hpp"
#include "geoskill/library_store.hpp"
#include "geoskill/metrics.hpp"
#include "geoskill/record_io.hpp"
#include "geoskill/retrieval.hpp"

namespace geoskill::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;

  RunConfig load() const {
    return load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);
  }
};

class UsageError : public Error {
 public:
  using Error::Error;
};

fs::path library_path(const std::string& flag, const RunConfig& c) {
  if (!flag.empty()) return flag;
  if (!c.paths.library.empty()) return c.resolve(c.paths.library);
  throw UsageError("no library given: pass --library or set paths.library");
}

SkillLibrary require_library(const fs::path& p) {
  if (!library_exists(p)) throw DataError("no library at " + p.string());
  return load_library(p);
}

struct ManifestItem {
  std::string id;
  std::string image;
  std::optional<GroundTruth> truth;
};

std::vector<ManifestItem> read_manifest(const fs::path& path) {
  std::vector<ManifestItem> items;
  std::set<std::string> seen;
  jsonl::for_each_object(path, [&](const nlohmann::json& j, const jsonl::Line& line) {
    try {
      ManifestItem m;
      m.id = j.at("id").get<std::string>();
      m.image = j.value("image", std::string());
      if (j.contains("lat") && j.contains("lon") && !j["lat"].is_null() && !j["lon"].is_null()) {
        m.truth = GroundTruth{GeoCoordinate(j["lat"].get<double>(), j["lon"].get<double>()),
                              j.value("country", std::string())};
      }
      if (!seen.insert(m.id).second) throw std::invalid_argument("duplicate id '" + m.id + "'");
      items.push_back(std::move(m));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line.number, line.byte_offset, e.what());
    }
  });
  return items;
}

void apply_run_flags(RunConfig& c, const std::string& mode, std::optional<std::uint64_t> seed,
                     std::optional<std::size_t> rollouts) {
  if (!mode.empty()) {
    try {
      c.inference.mode = parse_inference_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (seed) c.inference.seed = *seed;
  if (rollouts) {
    if (*rollouts == 0) throw UsageError("--rollouts must be at least 1");
    c.inference.rollouts = *rollouts;
  }
}

// --- compile -------------------------------------------------------------

int cmd_compile(const Common& common, const std::string& input, const std::string& out_dir,
                const std::string& lexicon_flag, std::ostream& out, std::ostream& err) {
  const RunConfig c = common.load();
  const std::string lexicon_path = !lexicon_flag.empty() ? lexicon_flag : c.resolve(c.paths.lexicon).string();
  CertaintyLexicon lexicon = lexicon_path.empty() ? CertaintyLexicon::defaults() : CertaintyLexicon::from_file(lexicon_path);

  const TrajectoryParseResult parsed = parse_trajectory_records(fs::path(input));
  for (const auto& d : parsed.diagnostics) err << input << ":" << d.line << ": " << d.message << "\n";

  const ExpertCompiler compiler(std::move(lexicon));
  const SkillLibrary lib = compiler.compile(parsed.records);

  const fs::path root(out_dir);
  std::error_code ec;
  if (fs::exists(root, ec)) {
    const bool ours = fs::exists(root / "CURRENT") || fs::exists(root / kManifestFile) || fs::is_empty(root);
    if (!ours) throw DataError("refusing to overwrite " + root.string() + ": not a library directory");
    fs::remove_all(root);
  }
  LibraryStore store(root);
  const fs::path dir = store.commit(lib);

  ojson summary;
  summary["library"] = root.string();
  summary["version_dir"] = dir.filename().string();
  summary["records"] = parsed.records.size();
  summary["diagnostics"] = parsed.diagnostics.size();
  summary["skills"] = lib.skills.size();
  summary["relation_priors"] = lib.relation_priors.size();
  summary["failure_subset"] = lib.failure_subset.size();
  out << summary.dump(2) << "\n";
  return kExitOk;
}

// --- infer -----------------------------------------------------------------

struct Runtime {
  RunConfig config;
  SkillLibrary library;
  std::unique_ptr<EmbeddingProvider> embedder;
  SkillIndex index;
  std::unique_ptr<ModelGateway> gateway;

  std::unique_ptr<InferenceEngine> engine() {
    return std::make_unique<InferenceEngine>(library, index, *embedder, *gateway, config.inference);
  }
};

Runtime make_runtime(RunConfig c, const fs::path& lib_path) {
  Runtime rt;
  rt.config = std::move(c);
  rt.library = require_library(lib_path);
  rt.embedder = make_embedder(rt.config);
  rt.index = build_index(rt.library, *rt.embedder);
  rt.gateway = make_gateway(rt.config);
  return rt;
}

int cmd_infer(const Common& common, const std::string& image, const std::string& lib_flag, const std::string& id,
              const std::string& mode, std::optional<std::uint64_t> seed, std::optional<std::size_t> rollouts,
              const std::string& records_flag, std::ostream& out) {
  RunConfig c = common.load();
  apply_run_flags(c, mode, seed, rollouts);
  Runtime rt = make_runtime(c, library_path(lib_flag, c));
  auto engine = rt.engine();
  const std::string query_id = id.empty() ? hex_digest(image) : id;
  auto [pred, record] = engine->vote(query_id, image, rt.config.inference.rollouts);

  const fs::path log = records_flag.empty() ? rt.config.resolve(rt.config.paths.records) : fs::path(records_flag);
  if (!log.empty()) RecordWriter(log).append(record);
  ojson o;
  o["query_id"] = query_id;
  o["mode"] = to_string(rt.config.inference.mode);
  o["prediction"] = prediction_to_json(pred);
  o["retrieved"] = record.retrieved.size();
  o["graph_nodes"] = record.graph.nodes.size();
  o["graph_edges"] = record.graph.edges.size();
  o["grounding_flags"] = record.grounding_flags;
  out << o.dump(2) << "\n";
  return kExitOk;
}

// --- batch_infer -------------------------------------------------------------

bool systemic(const GatewayError& e) {
  return e.kind() == GatewayError::Kind::Authentication || e.kind() == GatewayError::Kind::Configuration;
}

struct ItemResult {
  std::optional<InferenceRecord> record;
  std::string error;
  std::string kind;
};

ItemResult run_item(const InferenceEngine& engine, const ManifestItem& item, std::size_t rollouts,
                    double success_radius_km) {
  ItemResult r;
  try {
    auto [pred, rec] = engine.vote(item.id, item.image, rollouts);
    if (item.truth) rec = mark_outcome(std::move(rec), *item.truth, success_radius_km);
    r.record = std::move(rec);
  } catch (const GatewayError& e) {
    if (systemic(e)) throw;
    r.error = e.what();
    r.kind = "backend";
  } catch (const GroundingError& e) {
    r.error = e.what();
    r.kind = "grounding";
  } catch (const RolloutsFailedError& e) {
    r.error = e.what();
    r.kind = "rollouts";
  }
  return r;
}

void truncate_to(const fs::path& p, std::uintmax_t size) {
  std::error_code ec;
  if (!fs::exists(p, ec)) {
    if (size != 0) throw DataError("checkpoint refers to missing file " + p.string());
    return;
  }
  if (fs::file_size(p) < size) throw DataError("checkpoint is ahead of " + p.string());
  fs::resize_file(p, size);
}

std::uintmax_t size_or_zero(const fs::path& p) {
  std::error_code ec;
  const auto s = fs::file_size(p, ec);
  return ec ? 0 : s;
}

int cmd_batch_infer(const Common& common, const std::string& manifest_path, const std::string& lib_flag,
                    const std::string& out_flag, const std::string& errors_flag, const std::string& mode,
                    std::optional<std::uint64_t> seed, std::optional<std::size_t> rollouts, bool restart,
                    std::ostream& out, std::ostream& err) {
  RunConfig c = common.load();
  apply_run_flags(c, mode, seed, rollouts);
  const std::vector<ManifestItem> items = read_manifest(manifest_path);
  Runtime rt = make_runtime(c, library_path(lib_flag, c));
  auto engine = rt.engine();

  const fs::path records = out_flag.empty() ? rt.config.resolve(rt.config.paths.records) : fs::path(out_flag);
  if (records.empty()) throw UsageError("no record log: pass --out or set paths.records");
  const fs::path errors = errors_flag.empty() ? fs::path(records.string() + ".errors.jsonl") : fs::path(errors_flag);
  const fs::path checkpoint = records.string() + ".checkpoint.json";
  const std::string manifest_digest = hex_digest(jsonl::read_file(manifest_path));
  const std::string mode_name(to_string(rt.config.inference.mode));

  std::size_t start = 0;
  if (!restart && fs::exists(checkpoint)) {
    const auto cp = nlohmann::json::parse(jsonl::read_file(checkpoint));
    if (cp.at("manifest_digest") != manifest_digest || cp.at("mode") != mode_name ||
        cp.at("seed").get<std::uint64_t>() != rt.config.inference.seed) {
      throw DataError("checkpoint " + checkpoint.string() + " belongs to another run; pass --restart");
    }
    start = cp.at("completed").get<std::size_t>();
    truncate_to(records, cp.at("records_bytes").get<std::uintmax_t>());
    truncate_to(errors, cp.at("errors_bytes").get<std::uintmax_t>());
    err << "resuming at item " << start << " of " << items.size() << "\n";
  } else {
    fs::remove(records);
    fs::remove(errors);
    fs::remove(checkpoint);
  }

  auto write_checkpoint = [&](std::size_t completed) {
    ojson cp;
    cp["manifest_digest"] = manifest_digest;
    cp["mode"] = mode_name;
    cp["seed"] = rt.config.inference.seed;
    cp["completed"] = completed;
    cp["records_bytes"] = size_or_zero(records);
    cp["errors_bytes"] = size_or_zero(errors);
    jsonl::write_file_atomic(checkpoint, cp.dump() + "\n");
  };

  RecordWriter writer(records);
  std::size_t ok = 0;
  std::size_t failed = 0;
  const std::size_t width = rt.config.batch.parallelism;
  const std::size_t every = rt.config.batch.checkpoint_every;
  std::size_t since_checkpoint = 0;
  for (std::size_t i = start; i < items.size(); i += width) {
    const std::size_t end = std::min(items.size(), i + width);
    std::vector<ItemResult> results(end - i);
    if (width == 1) {
      results[0] = run_item(*engine, items[i], rt.config.inference.rollouts, rt.config.evolution.success_radius_km);
    } else {
      std::vector<std::future<ItemResult>> futures;
      for (std::size_t j = i; j < end; ++j) {
        futures.push_back(std::async(std::launch::async, run_item, std::cref(*engine), std::cref(items[j]),
                                     rt.config.inference.rollouts, rt.config.evolution.success_radius_km));
      }
      for (std::size_t j = 0; j < futures.size(); ++j) results[j] = futures[j].get();
    }
    // Results are written in manifest order whatever the completion order.
    for (std::size_t j = 0; j < results.size(); ++j) {
      if (results[j].record) {
        writer.append(*results[j].record);
        ++ok;
      } else {
        ojson e;
        e["id"] = items[i + j].id;
        e["kind"] = results[j].kind;
        e["error"] = results[j].error;
        jsonl::append(errors, e);
        ++failed;
      }
    }
    since_checkpoint += results.size();
    if (since_checkpoint >= every) {
      write_checkpoint(end);
      since_checkpoint = 0;
    }
  }
  write_checkpoint(items.size());

  ojson summary;
  summary["items"] = items.size();
  summary["resumed_from"] = start;
  summary["succeeded"] = ok;
  summary["failed"] = failed;
  summary["records"] = records.string();
  summary["errors"] = errors.string();
  summary["mode"] = mode_name;
  out << summary.dump(2) << "\n";
  return kExitOk;
}

// --- evolve ---------------------------------------------------------------

int cmd_evolve(const Common& common, const std::string& lib_flag, const std::string& records_path, bool dry_run,
               std::ostream& out) {
  const RunConfig c = common.load();
  const fs::path root = library_path(lib_flag, c);
  LibraryStore store(root);
  if (!store.has_head()) {
    if (fs::exists(root / kManifestFile)) {
      throw DataError(root.string() + " is a single library directory; evolve needs a versioned store (use compile)");
    }
    throw DataError("no library at " + root.string());
  }
  const SkillLibrary lib = store.load_head();
  const std::vector<InferenceRecord> records = read_records(records_path);
  auto embedder = make_embedder(c);
  auto gateway = make_gateway(c);

  EvolutionStep step = evolve_step(lib, records, c.evolution, *gateway, *embedder);
  step.report.dry_run = dry_run;
  if (!dry_run) commit_step(store, step);
  out << report_to_json(step.report).dump(2) << "\n";
  return kExitOk;
}

// --- eval -----------------------------------------------------------------

int cmd_eval(const Common& common, const std::string& predictions_path, const std::string& manifest_path,
             const std::string& gold_path, std::optional<double> theta, std::ostream& out) {
  const RunConfig c = common.load();
  (void)c;
  const auto items = read_manifest(manifest_path);
  std::map<std::string, InferenceRecord> by_id;
  std::set<std::string> modes;
  for (auto& r : read_records(predictions_path)) {
    modes.insert(std::string(to_string(r.mode)));
    by_id[r.query_id] = std::move(r);
  }

  std::vector<double> distances;
  std::size_t missing = 0;
  std::size_t unlabeled = 0;
  std::size_t country_hits = 0;
  for (const auto& item : items) {
    auto it = by_id.find(item.id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    if (!item.truth) {
      ++unlabeled;
      continue;
    }
    distances.push_back(haversine_km(it->second.prediction.coordinates, item.truth->coordinates));
    if (it->second.prediction.country == item.truth->country) ++country_hits;
  }
  const ThresholdReport tr = threshold_accuracy(distances);

  ojson o;
  o["predictions"] = predictions_path;
  o["modes"] = modes;
  o["samples"] = tr.samples;
  o["missing_predictions"] = missing;
  o["unlabeled"] = unlabeled;
  o["empty"] = tr.empty;
  o["earth_radius_km"] = kEarthRadiusKm;
  ojson acc = ojson::array();
  for (std::size_t i = 0; i < tr.thresholds_km.size(); ++i) {
    acc.push_back({{"threshold_km", tr.thresholds_km[i]}, {"accuracy", tr.accuracy[i]}});
  }
  o["threshold_accuracy"] = acc;
  o["mean_km"] = tr.mean_km;
  o["country_accuracy"] = tr.samples ? static_cast<double>(country_hits) / static_cast<double>(tr.samples) : 0.0;

  if (!gold_path.empty()) {
    std::vector<std::vector<std::string>> predicted;
    std::vector<std::vector<std::string>> gold;
    std::size_t gold_missing = 0;
    jsonl::for_each_object(gold_path, [&](const nlohmann::json& j, const jsonl::Line& line) {
      std::string id;
      std::vector<std::string> chain;
      try {
        id = j.at("id").get<std::string>();
        chain = j.at("chain").get<std::vector<std::string>>();
      } catch (const std::exception& e) {
        throw ParseError(gold_path, line.number, line.byte_offset, e.what());
      }
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        ++gold_missing;
        return;
      }
      std::vector<std::string> claims;
      for (const auto& cl : it->second.prediction.evidence) claims.push_back(cl.text);
      predicted.push_back(std::move(claims));
      gold.push_back(std::move(chain));
    });
    auto embedder = make_embedder(c);
    const FaithfulnessReport fr = faithfulness_prf(predicted, gold, *embedder, theta.value_or(0.8));
    ojson f;
    f["samples"] = predicted.size();
    f["missing_predictions"] = gold_missing;
    f["theta_match"] = fr.theta_match;
    f["precision_micro"] = fr.precision;
    f["recall_micro"] = fr.recall;
    f["f1_micro"] = fr.f1;
    f["f1_macro"] = fr.macro_f1;
    f["tp"] = fr.tp;
    f["fp"] = fr.fp;
    f["fn"] = fr.fn;
    o["faithfulness"] = f;
  }
  out << o.dump(2) << "\n";
  return kExitOk;
}

// --- library_stats ---------------------------------------------------------

int cmd_library_stats(const Common& common, const std::string& lib_flag, std::ostream& out) {
  const RunConfig c = common.load();
  const fs::path p = library_path(lib_flag, c);
  const SkillLibrary lib = require_library(p);

  std::map<std::string, std::size_t> by_stage;
  std::map<std::string, std::size_t> by_provenance;
  std::map<std::string, std::size_t> by_country;
  std::size_t global = 0;
  double conf_sum = 0.0;
  for (const auto& [id, s] : lib.skills) {
    ++by_stage[std::string(to_string(s.stage))];
    ++by_provenance[std::string(to_string(s.provenance.kind))];
    if (s.countries.empty()) ++global;
    for (const auto& cc : s.countries) ++by_country[cc];
    conf_sum += s.confidence;
  }
  std::vector<std::pair<std::string, std::size_t>> top(by_country.begin(), by_country.end());
  std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (top.size() > 10) top.resize(10);

  ojson o;
  o["library"] = p.string();
  o["version"] = lib.version;
  o["skills"] = lib.skills.size();
  o["relation_priors"] = lib.relation_priors.size();
  o["failure_subset"] = lib.failure_subset.size();
  o["by_stage"] = by_stage;
  o["by_provenance"] = by_provenance;
  o["global_skills"] = global;
  o["countries"] = by_country.size();
  ojson t = ojson::array();
  for (const auto& [cc, n] : top) t.push_back({{"country", cc}, {"skills", n}});
  o["top_countries"] = t;
  o["mean_confidence"] = lib.skills.empty() ? 0.0 : conf_sum / static_cast<double>(lib.skills.size());
  LibraryStore store(p);
  if (store.has_head() && fs::exists(store.history_path())) {
    const auto history = read_history(store.history_path());
    if (!history.empty()) {
      const EvolutionTable table = evolution_report(history);
      ojson rows = ojson::array();
      for (const auto& r : table.rows) {
        rows.push_back({{"iteration", r.iteration}, {"version", r.version}, {"skills", r.skills}, {"delta", r.delta},
                        {"added", r.added}, {"merged", r.merged}, {"pruned", r.pruned}});
      }
      o["evolution"] = {{"initial_skills", table.initial_skills}, {"rows", rows}};
    }
  }
  out << o.dump(2) << "\n";
  return kExitOk;
}

int cmd_config(const Common& common, std::ostream& out) {
  out << config_to_json(common.load()).dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skill-graph geolocation engine"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_path, "Run configuration (JSON); defaults to $GEOSKILL_CONFIG");
  app.add_option("--override", common.overrides, "key=value applied after the config file")->take_all();

  std::string input, out_dir, lexicon, image, library, id, mode, records, manifest, errors, predictions, gold;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rollouts;
  std::optional<double> theta;
  bool dry_run = false;
  bool restart = false;

  auto* compile = app.add_subcommand("compile", "Compile expert trajectories into a version-0 library");
  compile->add_option("--input", input, "Trajectory JSONL")->required();
  compile->add_option("--out", out_dir, "Library store directory")->required();
  compile->add_option("--lexicon", lexicon, "Certainty lexicon JSON");

  auto* infer = app.add_subcommand("infer", "Geolocate one image");
  infer->add_option("--image", image, "Image path or URL")->required();
  infer->add_option("--library", library, "Library directory or store");
  infer->add_option("--id", id, "Query id (default: digest of the image reference)");
  infer->add_option("--rollouts", rollouts, "Voting rollouts");
  infer->add_option("--mode", mode, "full|wo_skill|random_skill|shuffled_order|atomic_only");
  infer->add_option("--seed", seed, "Seed for ablation modes");
  infer->add_option("--records", records, "Record log to append to (default paths.records)");

  auto* batch = app.add_subcommand("batch_infer", "Geolocate every image of a dataset manifest");
  batch->add_option("--manifest", manifest, "Dataset manifest JSONL")->required();
  batch->add_option("--library", library, "Library directory or store");
  batch->add_option("--out", records, "Record log (default paths.records)");
  batch->add_option("--errors", errors, "Per-item error log (default <out>.errors.jsonl)");
  batch->add_option("--rollouts", rollouts, "Voting rollouts");
  batch->add_option("--mode", mode, "full|wo_skill|random_skill|shuffled_order|atomic_only");
  batch->add_option("--seed", seed, "Seed for ablation modes");
  batch->add_flag("--restart", restart, "Ignore an existing checkpoint");

  auto* evolve = app.add_subcommand("evolve", "Run one evolution step over a record log");
  evolve->add_option("--library", library, "Library store");
  evolve->add_option("--records", records, "Record log")->required();
  evolve->add_flag("--dry-run", dry_run, "Report without committing");

  auto* eval = app.add_subcommand("eval", "Score a record log against a manifest");
  eval->add_option("--predictions", predictions, "Record log")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest JSONL")->required();
  eval->add_option("--faithfulness-gold", gold, "Gold reasoning chains JSONL");
  eval->add_option("--theta", theta, "Faithfulness match threshold");

  auto* stats = app.add_subcommand("library_stats", "Summarize a library");
  stats->add_option("--library", library, "Library directory or store");

  auto* config = app.add_subcommand("config", "Print the effective configuration");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*compile) return cmd_compile(common, input, out_dir, lexicon, out, err);
    if (*infer) return cmd_infer(common, image, library, id, mode, seed, rollouts, records, out);
    if (*batch) return cmd_batch_infer(common, manifest, library, records, errors, mode, seed, rollouts, restart, out, err);
    if (*evolve) return cmd_evolve(common, library, records, dry_run, out);
    if (*eval) return cmd_eval(common, predictions, manifest, gold, theta, out);
    if (*stats) return cmd_library_stats(common, library, out);
    if (*config) return cmd_config(common, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GatewayError& e) {
    err << "backend error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return kExitBackend;
  } catch (const GroundingError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const RolloutsFailedError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace geoskill::cli
