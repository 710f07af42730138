// vad-iot: run transmission scenarios, replay latency tables, write
// synthetic datasets and inspect payload files.
//
// Exit codes: 0 success, 1 scenario error, 2 config error.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "vad/codecs.hpp"
#include "vad/data_io.hpp"
#include "vad/pipeline/config.hpp"
#include "vad/pipeline/report.hpp"
#include "vad/pipeline/runner.hpp"
#include "vad/pq.hpp"
#include "vad/synthetic.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kScenarioError = 1;
constexpr int kConfigError = 2;

struct Options {
  std::string config;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool parallel = false;
  std::string overrides;
  int dump_payloads = 0;
  std::string payload_file;
};

vad::RunConfig load_config(const Options& o) {
  vad::RunConfig cfg = o.config.empty() ? vad::RunConfig{} : vad::load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.parallel) cfg.parallel = true;
  cfg.validate();
  return cfg;
}

void print_summary(const vad::SuiteResult& s) {
  std::cout << vad::tradeoff_tsv(s) << '\n' << vad::latency_totals_tsv(s.latency);
  for (const auto& r : s.scenarios)
    if (!r.ok) std::cerr << "scenario " << r.scenario.name << " failed: " << r.error << '\n';
}

void dump_payloads(const vad::RunConfig& cfg, const vad::Scenario& sc, int count) {
  vad::DataCache cache(cfg);
  const auto& cat = cfg.categories.front();
  const auto& data = cache.category(cat);
  vad::StageContext ctx;
  if (vad::uses_pq(sc.strategy)) ctx.codebook = cache.codebook(cat);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), data.test.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = data.test[i];
    vad::EdgeInput in{s.image ? &*s.image : nullptr, s.features ? &*s.features : nullptr};
    const auto p = vad::edge_encode(sc, in, ctx, vad::image_seed(cfg.seed, cat.name, "test", i));
    const auto path = cfg.output_dir / "payloads" / (sc.name + "_" + s.id + ".vpld");
    vad::write_file_bytes(path, vad::serialize_payload(p));
    std::cout << path.string() << '\t' << p.size_bytes() << '\n';
  }
}

int cmd_suite(const Options& o, bool single) {
  const auto cfg = load_config(o);
  std::optional<vad::LatencyOverrides> ov;
  if (!o.overrides.empty()) ov = vad::load_latency_overrides(o.overrides);
  std::vector<vad::Scenario> only;
  if (single) {
    auto sc = cfg.find_scenario(o.scenario);
    if (!sc) throw vad::ConfigError("unknown scenario \"" + o.scenario + "\"");
    only.push_back(*sc);
  } else if (!o.scenario.empty()) {
    throw vad::ConfigError("suite runs every configured scenario; use `run --scenario` for one");
  }
  const auto result = vad::run_suite(cfg, ov ? &*ov : nullptr, single ? &only : nullptr);
  for (const auto& p : vad::write_suite_reports(result, cfg, cfg.output_dir)) std::cerr << "wrote " << p.string() << '\n';
  if (single && o.dump_payloads > 0 && result.scenarios.front().ok) dump_payloads(cfg, only.front(), o.dump_payloads);
  print_summary(result);
  for (const auto& r : result.scenarios)
    if (!r.ok) return kScenarioError;
  return kOk;
}

int cmd_replay(const Options& o) {
  if (o.overrides.empty()) throw vad::ConfigError("replay needs --paper-overrides <file>");
  const auto ov = vad::load_latency_overrides(o.overrides);
  vad::DeviceProfile profile;
  if (!o.config.empty()) profile = vad::load_run_config(o.config).device;
  const auto rep = vad::replay_latency(ov, profile);
  std::cout << vad::latency_components_tsv(rep) << '\n' << vad::latency_totals_tsv(rep);
  if (!o.out.empty()) {
    const vad::fs::path dir = o.out;
    vad::write_text_file(dir / "latency_components.tsv", vad::latency_components_tsv(rep));
    vad::write_text_file(dir / "latency_totals.tsv", vad::latency_totals_tsv(rep));
    vad::write_text_file(dir / "latency.json", vad::latency_report_json(rep).dump(2) + "\n");
  }
  return kOk;
}

int cmd_synth(const Options& o) {
  if (o.out.empty()) throw vad::ConfigError("synth-data needs --out <dir>");
  auto cfg = load_config(o);
  const vad::fs::path root = o.out;
  vad::PreparedIndex idx;
  for (const auto& c : cfg.categories) {
    vad::SyntheticSpec spec;
    spec.category = c.name;
    spec.kind = c.kind;
    spec.image_side = cfg.image_side;
    spec.delta_sigma = cfg.synthetic.delta_sigma;
    spec.noise_std = cfg.synthetic.noise_std;
    const auto cat = vad::generate_synthetic(spec, cfg.synthetic.n_train, cfg.synthetic.n_test,
                                             cfg.synthetic.anomaly_fraction, cfg.seed);
    idx.categories.push_back(vad::write_synthetic(cat, root));
  }
  vad::write_text_file(root / "index.json", vad::to_json(idx).dump(2) + "\n");
  std::cout << "wrote " << idx.categories.size() << " categories to " << root.string() << '\n';
  return kOk;
}

int cmd_inspect(const Options& o) {
  const auto bytes = vad::read_file_bytes(o.payload_file);
  const auto p = vad::parse_payload(bytes);
  std::cout << "kind\t" << vad::to_string(p.kind) << "\nsize_bytes\t" << p.size_bytes() << "\nmeta_bytes\t"
            << p.meta.size() << "\nbody_bytes\t" << p.body.size() << '\n';
  switch (p.kind) {
    case vad::PayloadKind::raw_image:
    case vad::PayloadKind::compressed_image: {
      const auto img = p.kind == vad::PayloadKind::raw_image ? vad::decode_raw_image(p) : vad::image_decode(p);
      std::cout << "image\t" << img.height << 'x' << img.width << 'x' << img.channels << '\n';
      break;
    }
    case vad::PayloadKind::raw_features:
    case vad::PayloadKind::tiled_features: {
      if (p.kind == vad::PayloadKind::tiled_features && vad::detail::read_tiled(p, vad::CodecRegistry::instance()).sparse) {
        const auto set = vad::decode_tiled_sampled(p);
        std::cout << "grid\t" << set.rows() << 'x' << set.cols() << "\npatches\t" << set.size() << "\nd\t" << set.dim()
                  << '\n';
        break;
      }
      const auto layers =
          p.kind == vad::PayloadKind::raw_features ? vad::decode_raw_features(p) : vad::decode_tiled_stack(p);
      for (const auto& t : layers)
        std::cout << "layer " << t.layer() << '\t' << t.channels() << 'x' << t.height() << 'x' << t.width() << '\n';
      break;
    }
    case vad::PayloadKind::sampled_features: {
      const auto set = vad::parse_sampled_payload(p);
      std::cout << "grid\t" << set.rows() << 'x' << set.cols() << "\npatches\t" << set.size() << "\nd\t" << set.dim()
                << '\n';
      break;
    }
    case vad::PayloadKind::pq_codes: {
      const auto pc = vad::parse_pq_payload(p);
      std::cout << "grid\t" << pc.layout.rows << 'x' << pc.layout.cols << "\nvectors\t" << pc.codes.n << "\nm\t"
                << pc.codes.m << "\nK\t" << pc.codes.K << "\ncodebook\t" << (pc.codebook ? "embedded" : "pre-shared")
                << '\n';
      break;
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge/server visual anomaly detection scenarios"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON run configuration");
    c->add_option("--seed", o.seed, "Override the base seed");
    c->add_option("--out", o.out, "Output directory");
    c->add_flag("--parallel", o.parallel, "Evaluate images on a worker pool (disables timing)");
    c->add_option("--paper-overrides", o.overrides, "Latency components/payloads JSON");
  };
  auto* run = app.add_subcommand("run", "Run one scenario");
  common(run);
  run->add_option("--scenario", o.scenario, "Scenario name")->required();
  run->add_option("--dump-payloads", o.dump_payloads, "Write the first N test payloads as .vpld files");
  auto* suite = app.add_subcommand("suite", "Run every configured scenario");
  common(suite);
  suite->add_option("--scenario", o.scenario, "Not accepted; use run");
  auto* replay = app.add_subcommand("replay", "Recompute latency tables from component timings");
  common(replay);
  auto* synth = app.add_subcommand("synth-data", "Write the synthetic dataset as feature/image files");
  common(synth);
  auto* inspect = app.add_subcommand("inspect-payload", "Describe a serialized payload");
  inspect->add_option("file", o.payload_file, "Payload file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_suite(o, true);
    if (*suite) return cmd_suite(o, false);
    if (*replay) return cmd_replay(o);
    if (*synth) return cmd_synth(o);
    if (*inspect) return cmd_inspect(o);
  } catch (const vad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const vad::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kScenarioError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kScenarioError;
  }
  return kOk;
}
