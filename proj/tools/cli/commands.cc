#include "commands.h"

#include <functional>
#include <ostream>

#include <CLI11.hpp>

#include "headlens/artifact_store.h"
#include "headlens/errors.h"

namespace headlens::cli {
namespace {

// Maps the library's error families onto exit codes.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ReconstructionError& e) {
    err << "reconstruction failed: worst image " << e.image_id() << " residual " << e.residual() << '\n';
    return kInvariantFailure;
  } catch (const JudgeError& e) {
    err << "judge failure: " << e.what() << '\n';
    return kJudgeFailure;
  } catch (const InvariantError& e) {
    err << "invariant violated: " << e.what() << '\n';
    return kInvariantFailure;
  } catch (const TextSpanError& e) {
    err << "textspan: " << e.what() << '\n';
    return kInvariantFailure;
  } catch (const MetricError& e) {
    err << "metric: " << e.what() << '\n';
    return kInvariantFailure;
  } catch (const IoError& e) {
    err << "i/o: " << e.what() << '\n';
    return kIoOrConfig;
  } catch (const FormatError& e) {
    err << "format: " << e.what() << '\n';
    return kIoOrConfig;
  } catch (const ConfigError& e) {
    err << "config: " << e.what() << '\n';
    return kIoOrConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "i/o: " << e.what() << '\n';
    return kIoOrConfig;
  }
}

ExperimentConfig config_for(const CommandOptions& options) {
  if (options.config.empty()) throw ConfigError("--config is required");
  return load_config(options.config, options.overrides);
}

}  // namespace

int cmd_validate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::filesystem::path manifest;
    LoadOptions load;
    if (options.manifest) {
      manifest = *options.manifest;
      if (options.overrides.seed) load.sample_seed = *options.overrides.seed;
    } else {
      const auto config = config_for(options);
      manifest = config.manifest;
      load.sample_seed = config.seed;
    }
    const auto bundle = load_bundle(manifest, load);
    if (!options.manifest) check_datasets(config_for(options), bundle.manifest());
    const auto& rec = bundle.reconstruction();
    out << "ok: " << bundle.manifest().model_name << ", " << bundle.num_images() << " images, "
        << bundle.manifest().window_heads().size() << " window heads, d=" << bundle.embed_dim() << '\n';
    out << "reconstruction: " << rec.images_checked << " images checked, max relative residual "
        << rec.max_relative_residual;
    if (!rec.worst_image.empty()) out << " (" << rec.worst_image << ")";
    out << '\n';
    return kOk;
  });
}

int cmd_profile(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = config_for(options);
    const auto outcome = run_profile(config);
    const auto& s = outcome.summary;
    auto count = [&](Band b) {
      const auto it = s.counts.find(b);
      return it == s.counts.end() ? std::size_t{0} : it->second;
    };
    out << s.model_name << ": H=" << s.heads << " High=" << count(Band::kHigh)
        << " Moderate=" << count(Band::kModerate) << " Low=" << count(Band::kLow)
        << " Uncategorized=" << count(Band::kUncategorized);
    if (s.ccr) out << " CCR=" << *s.ccr;
    out << '\n';
    out << "judge calls: " << outcome.judge_calls << " (cached: " << outcome.cache_hits << ")\n";
    out << "wrote " << config.output_dir.string() << '\n';
    return kOk;
  });
}

int cmd_evaluate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = config_for(options);
    const auto outcome = run_evaluate(config);
    out << eval_grid_csv(outcome.reports, outcome.columns);
    return kOk;
  });
}

int cmd_report(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    out << run_report(config_for(options));
    return kOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attention-head concept consistency profiling and pruning evaluation"};
  app.require_subcommand(1);
  CommandOptions options;
  std::string judges;
  std::uint64_t seed = 0;
  int k = 0;
  std::string out_dir;
  std::string manifest;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config, "experiment config (JSON)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--judges", judges, "judge mode")->check(CLI::IsMember({"lexical", "remote"}));
    sub->add_option("--k", k, "TextSpan descriptions per head")->check(CLI::PositiveNumber);
  };
  auto* validate = app.add_subcommand("validate", "check an export against its invariants");
  add_common(validate);
  validate->add_option("--manifest", manifest, "validate this manifest without a config");
  auto* profile = app.add_subcommand("profile", "describe, label and judge every window head");
  add_common(profile);
  auto* evaluate = app.add_subcommand("evaluate", "run the pruning x dataset grid");
  add_common(evaluate);
  auto* report = app.add_subcommand("report", "summarize profiles and evaluation results");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kIoOrConfig;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--out")) options.overrides.out = out_dir;
  if (sub->count("--seed")) options.overrides.seed = seed;
  if (sub->count("--judges")) options.overrides.judges = judges;
  if (sub->count("--k")) options.overrides.k = k;
  if (sub == validate && validate->count("--manifest")) options.manifest = manifest;

  if (sub == validate) return cmd_validate(options, out, err);
  if (sub == profile) return cmd_profile(options, out, err);
  if (sub == evaluate) return cmd_evaluate(options, out, err);
  return cmd_report(options, out, err);
}

}  // namespace headlens::cli
