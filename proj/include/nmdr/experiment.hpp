#pragma once

#include "nmdr/chain.hpp"
#include "nmdr/checkpoint.hpp"
#include "nmdr/io.hpp"
#include "nmdr/predict.hpp"
#include "nmdr/simulate.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace nmdr {

enum class ChainSelection { BestLogJoint, Pooled };

/// Sampling protocol shared by the CLI, the orchestrator and the tests.
struct Protocol {
  HyperParams hyper;
  ChainConfig chain;
  int chains = 3;
  int sweeps = 6000;
  double burn_in = 0.5;  // fraction of sweeps discarded
  int max_samples = 200; // retained draws per chain after thinning
  ChainSelection selection = ChainSelection::BestLogJoint;
  std::uint64_t seed = 1;
  int threads = 0;       // 0: hardware concurrency

  void validate() const {
    hyper.validate();
    if (chains < 1) throw UsageError("chains must be at least 1");
    if (sweeps < 1) throw UsageError("sweeps must be at least 1");
    if (!(burn_in >= 0.0 && burn_in < 1.0)) throw UsageError("burn-in fraction must lie in [0,1)");
    if (max_samples < 1) throw UsageError("max samples must be at least 1");
  }

  /// First retained sweep (1-based) and the thinning stride.
  std::pair<long, long> retention() const {
    long first = static_cast<long>(std::floor(burn_in * sweeps)) + 1;
    long kept = sweeps - first + 1;
    long stride = std::max<long>(1, (kept + max_samples - 1) / max_samples);
    return {first, stride};
  }

  bool retained(long iter) const {
    auto [first, stride] = retention();
    return iter >= first && (iter - first) % stride == 0;
  }
};

struct ChainRun {
  std::vector<SweepReport> trace;
  std::vector<PredictiveSample> samples;
  std::vector<int> retained_K;  // K_occupied at each retained sweep
  double mean_log_joint = 0.0;

  void summarize() {
    mean_log_joint = 0.0;
    for (const auto& s : samples) mean_log_joint += s.log_joint;
    if (!samples.empty()) mean_log_joint /= static_cast<double>(samples.size());
  }
};

struct ChainHooks {
  std::function<void(const SweepReport&)> on_sweep;
  std::function<void(const PredictiveSample&, long)> on_sample;
  std::function<void(const ChainState&)> on_checkpoint;
  int checkpoint_every = 0;
};

/// Advances a chain to `protocol.sweeps`, collecting retained samples.
inline void continue_chain(ChainState& st, const Protocol& protocol, ChainRun& run, const ChainHooks& hooks = {}) {
  while (st.iter < protocol.sweeps) {
    auto rep = sweep(st);
    run.trace.push_back(rep);
    if (hooks.on_sweep) hooks.on_sweep(rep);
    if (protocol.retained(rep.iter)) {
      auto ps = PredictiveSample::from(st);
      ps.log_joint = rep.log_joint;
      if (hooks.on_sample) hooks.on_sample(ps, rep.iter);
      run.samples.push_back(std::move(ps));
      run.retained_K.push_back(rep.K_occupied);
    }
    if (hooks.on_checkpoint && hooks.checkpoint_every > 0 &&
        (st.iter % hooks.checkpoint_every == 0 || st.iter == protocol.sweeps))
      hooks.on_checkpoint(st);
  }
  run.summarize();
}

inline ChainRun run_chain(const EdgeData& train, const Metadata& phi, const Protocol& protocol, Rng rng,
                          const ChainHooks& hooks = {}) {
  auto st = init_chain(train, phi, protocol.hyper, rng, protocol.chain);
  ChainRun run;
  continue_chain(st, protocol, run, hooks);
  return run;
}

/// Runs jobs [0, n) on a small worker pool; rethrows the first failure.
inline void parallel_for(int n, int threads, const std::function<void(int)>& job) {
  int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int k = 0; k < n; ++k) job(k);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int k; (k = next++) < n;) {
        try {
          job(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Posterior samples used for prediction: those of the best chain by mean
/// retained log joint, or every chain's.
struct Selected {
  std::vector<PredictiveSample> samples;
  std::vector<int> K_occupied;
  int chain = -1;
};

inline Selected select_samples(const std::vector<ChainRun>& runs, ChainSelection mode) {
  Selected out;
  if (mode == ChainSelection::Pooled) {
    for (const auto& r : runs) {
      out.samples.insert(out.samples.end(), r.samples.begin(), r.samples.end());
      out.K_occupied.insert(out.K_occupied.end(), r.retained_K.begin(), r.retained_K.end());
    }
    return out;
  }
  int best = 0;
  for (int c = 1; c < static_cast<int>(runs.size()); ++c)
    if (runs[c].mean_log_joint > runs[best].mean_log_joint) best = c;
  out.samples = runs[best].samples;
  out.K_occupied = runs[best].retained_K;
  out.chain = best;
  return out;
}

inline int mode_of(const std::vector<int>& xs) {
  std::map<int, int> freq;
  for (int x : xs) ++freq[x];
  int best = 0, count = -1;
  for (auto [x, c] : freq)
    if (c > count) best = x, count = c;
  return best;
}

struct MaskResult {
  Mask mask;
  PredictionTable predictions;
  double auc = 0.0;
  int K_mode = 0;
  int chain = -1;
  std::vector<double> chain_log_joint;
};

inline std::uint64_t mask_seed(std::uint64_t seed, int mask_index) {
  return Rng::stream(seed, {0x6d61736bULL, static_cast<std::uint64_t>(mask_index)}).next_u64();
}

inline Rng chain_rng(std::uint64_t seed, int mask_index, int chain) {
  return Rng::stream(seed, {0x636861696eULL, static_cast<std::uint64_t>(mask_index), static_cast<std::uint64_t>(chain)});
}

inline MaskResult score_mask(const EdgeData& data, Mask mask, const std::vector<ChainRun>& runs,
                             ChainSelection mode) {
  MaskResult res;
  auto sel = select_samples(runs, mode);
  res.predictions = predict_links(sel.samples, mask.hidden, &data);
  res.auc = auc(res.predictions);
  res.K_mode = mode_of(sel.K_occupied);
  res.chain = sel.chain;
  for (const auto& r : runs) res.chain_log_joint.push_back(r.mean_log_joint);
  res.mask = std::move(mask);
  return res;
}

/// The held-out link prediction protocol: for each of `masks` random masks,
/// run every chain on the training entries and score the hidden ones.
inline std::vector<MaskResult> evaluate_masks(const EdgeData& data, const Metadata& phi, const Protocol& protocol,
                                              int masks, double p) {
  protocol.validate();
  std::vector<MaskedData> split;
  for (int k = 0; k < masks; ++k) split.push_back(make_mask(data, p, mask_seed(protocol.seed, k)));
  std::vector<std::vector<ChainRun>> runs(masks, std::vector<ChainRun>(protocol.chains));
  parallel_for(masks * protocol.chains, protocol.threads, [&](int job) {
    int k = job / protocol.chains, c = job % protocol.chains;
    runs[k][c] = run_chain(split[k].train, phi, protocol, chain_rng(protocol.seed, k, c));
  });
  std::vector<MaskResult> out;
  for (int k = 0; k < masks; ++k) out.push_back(score_mask(data, split[k].mask, runs[k], protocol.selection));
  return out;
}

// ---------------------------------------------------------------------------
// Run directories

struct RunConfig {
  std::string edges, metadata, mask;
  std::string preset;  // "synth-single" or "synth-mixed" generates the data
  std::string out_dir = "run";
  Protocol protocol;
  int masks = 10;
  double mask_p = 0.5;
  bool standardize = true;
  int checkpoint_every = 500;

  void validate() const {
    protocol.validate();
    if (preset.empty() && edges.empty()) throw UsageError("either an edge file or a preset is required");
    if (!preset.empty() && preset != "synth-single" && preset != "synth-mixed")
      throw UsageError("unknown preset '" + preset + "'");
    if (masks < 1) throw UsageError("masks must be at least 1");
    if (!(mask_p > 0.0 && mask_p < 1.0)) throw UsageError("mask probability must lie in (0,1)");
    namespace fs = std::filesystem;
    for (const auto* p : {&edges, &metadata, &mask})
      if (!p->empty() && !fs::exists(*p)) throw UsageError("path not found: " + *p);
  }
};

inline nlohmann::json run_config_json(const RunConfig& c) {
  const auto& p = c.protocol;
  return {{"edges", c.edges},
          {"metadata", c.metadata},
          {"mask", c.mask},
          {"preset", c.preset},
          {"out_dir", c.out_dir},
          {"hyper", detail::hyper_json(p.hyper)},
          {"chain", detail::config_json(p.chain)},
          {"chains", p.chains},
          {"sweeps", p.sweeps},
          {"burn_in", p.burn_in},
          {"max_samples", p.max_samples},
          {"selection", p.selection == ChainSelection::Pooled ? "pooled" : "best-log-joint"},
          {"seed", p.seed},
          {"masks", c.masks},
          {"mask_p", c.mask_p},
          {"standardize", c.standardize},
          {"checkpoint_every", c.checkpoint_every}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c = {}) {
  auto& p = c.protocol;
  c.edges = j.value("edges", c.edges);
  c.metadata = j.value("metadata", c.metadata);
  c.mask = j.value("mask", c.mask);
  c.preset = j.value("preset", c.preset);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("hyper")) p.hyper = detail::hyper_from_json(j["hyper"], p.hyper);
  if (j.contains("chain")) p.chain = detail::config_from_json(j["chain"], p.chain);
  p.chains = j.value("chains", p.chains);
  p.sweeps = j.value("sweeps", p.sweeps);
  p.burn_in = j.value("burn_in", p.burn_in);
  p.max_samples = j.value("max_samples", p.max_samples);
  if (j.contains("selection")) {
    auto s = j["selection"].get<std::string>();
    if (s == "pooled") p.selection = ChainSelection::Pooled;
    else if (s == "best-log-joint") p.selection = ChainSelection::BestLogJoint;
    else throw UsageError("unknown chain selection '" + s + "'");
  }
  p.seed = j.value("seed", p.seed);
  p.threads = j.value("threads", p.threads);
  c.masks = j.value("masks", c.masks);
  c.mask_p = j.value("mask_p", c.mask_p);
  c.standardize = j.value("standardize", c.standardize);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

struct Dataset {
  EdgeData data;
  Metadata phi;
};

/// Generates one of the synthetic benchmarks; returns the record lines too.
inline Dataset generate_preset(const std::string& preset, std::uint64_t seed, std::string* record = nullptr) {
  SyntheticDataset ds;
  Rng rng = Rng::stream(seed, {0x64617461ULL});
  if (preset == "synth-single") ds = synth_single(rng);
  else if (preset == "synth-mixed") ds = synth_mixed(rng);
  else throw UsageError("unknown preset '" + preset + "'");
  for (int i = 0; i < ds.data.N(); ++i) ds.data.node_ids.push_back("n" + std::to_string(i));
  ds.data.relation_ids = {"r0"};
  if (record) {
    std::ostringstream os;
    write_latent_record(os, ds);
    *record = os.str();
  }
  return {ds.data, Metadata::intercept_only(ds.data.N())};
}

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> lines;
  std::ifstream in(p);
  for (std::string s; std::getline(in, s);)
    if (!s.empty()) lines.push_back(s);
  return lines;
}

inline void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  auto out = open_output(p.string());
  for (const auto& l : lines) out << l << '\n';
}

/// Runs (or resumes) one chain inside `dir`: trace.jsonl, samples.jsonl and
/// checkpoint.json. A checkpoint with iter < sweeps resumes from there.
inline ChainRun run_chain_in(const std::filesystem::path& dir, const EdgeData& train, const Metadata& phi,
                             const Protocol& protocol, Rng rng, int checkpoint_every) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto trace_path = dir / "trace.jsonl", sample_path = dir / "samples.jsonl", ckpt_path = dir / "checkpoint.json";

  ChainRun run;
  std::optional<ChainState> st;
  if (fs::exists(ckpt_path)) {
    auto in = open_input(ckpt_path.string());
    st = read_checkpoint(in);
    long done = st->iter;
    auto trace = read_lines(trace_path);
    auto samples = read_lines(sample_path);
    if (static_cast<long>(trace.size()) < done) throw DataError("trace in " + dir.string() + " is shorter than its checkpoint");
    trace.resize(done);
    std::vector<std::string> kept;
    for (const auto& l : samples) {
      auto iter = nlohmann::json::parse(l).at("iter").get<long>();
      if (iter <= done && protocol.retained(iter)) kept.push_back(l);
    }
    write_lines(trace_path, trace);
    write_lines(sample_path, kept);
    for (const auto& l : trace) run.trace.push_back(parse_trace_line(l));
    for (const auto& l : kept) {
      run.samples.push_back(parse_sample_line(l));
      auto iter = nlohmann::json::parse(l).at("iter").get<long>();
      run.retained_K.push_back(run.trace[iter - 1].K_occupied);
    }
  } else {
    st = init_chain(train, phi, protocol.hyper, rng, protocol.chain);
    write_lines(trace_path, {});
    write_lines(sample_path, {});
  }

  std::ofstream trace_out(trace_path, std::ios::app), sample_out(sample_path, std::ios::app);
  ChainHooks hooks;
  hooks.on_sweep = [&](const SweepReport& r) { trace_out << trace_line(r) << '\n'; };
  hooks.on_sample = [&](const PredictiveSample& s, long iter) { sample_out << sample_line(s, iter) << '\n'; };
  hooks.checkpoint_every = std::max(1, checkpoint_every);
  hooks.on_checkpoint = [&](const ChainState& s) {
    trace_out.flush();
    sample_out.flush();
    auto tmp = ckpt_path;
    tmp += ".tmp";
    {
      auto out = open_output(tmp.string());
      write_checkpoint(out, s);
    }
    fs::rename(tmp, ckpt_path);
  };
  continue_chain(*st, protocol, run, hooks);
  return run;
}

/// Loads the trace and retained samples of a finished (or partial) chain.
inline ChainRun read_chain_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "samples.jsonl")) throw DataError("no samples.jsonl in " + dir.string());
  ChainRun run;
  for (const auto& l : read_lines(dir / "trace.jsonl")) run.trace.push_back(parse_trace_line(l));
  for (const auto& l : read_lines(dir / "samples.jsonl")) {
    run.samples.push_back(parse_sample_line(l));
    auto iter = nlohmann::json::parse(l).at("iter").get<long>();
    run.retained_K.push_back(iter >= 1 && iter <= static_cast<long>(run.trace.size())
                                 ? run.trace[iter - 1].K_occupied
                                 : run.samples.back().K);
  }
  run.summarize();
  return run;
}

inline std::string mask_dir_name(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "mask_%02d", k);
  return buf;
}

}  // namespace detail

/// Runs (or resumes) every chain of `protocol` on one training set, each in
/// `dir`/chain_C. Chain streams match mask `mask_index` of run_experiment.
inline std::vector<ChainRun> fit_chains(const std::filesystem::path& dir, const EdgeData& train, const Metadata& phi,
                                        const Protocol& protocol, int checkpoint_every, int mask_index = 0) {
  protocol.validate();
  std::vector<ChainRun> runs(protocol.chains);
  parallel_for(protocol.chains, protocol.threads, [&](int c) {
    runs[c] = detail::run_chain_in(dir / ("chain_" + std::to_string(c)), train, phi, protocol,
                                   chain_rng(protocol.seed, mask_index, c), checkpoint_every);
  });
  return runs;
}

/// Reads every chain_C subdirectory of a fit directory, in chain order.
inline std::vector<ChainRun> read_fit_dir(const std::filesystem::path& dir) {
  std::vector<ChainRun> runs;
  for (int c = 0; std::filesystem::exists(dir / ("chain_" + std::to_string(c))); ++c)
    runs.push_back(detail::read_chain_dir(dir / ("chain_" + std::to_string(c))));
  if (runs.empty()) throw DataError("no chain directories in " + dir.string());
  return runs;
}

/// Full experiment in `config.out_dir`:
///   config.json               resolved configuration
///   data/edges.csv            input edges (and data/truth.jsonl for presets)
///   mask_XX/mask.csv          hidden entries
///   mask_XX/chain_C/          trace.jsonl, samples.jsonl, checkpoint.json
///   mask_XX/predictions.csv   held-out predictions of the selected samples
///   auc.txt                   per-mask AUC with mean and sd
inline AucSummary run_experiment(const RunConfig& config) {
  namespace fs = std::filesystem;
  config.validate();
  const auto& protocol = config.protocol;
  const fs::path root = config.out_dir;
  fs::create_directories(root / "data");
  {
    auto out = detail::open_output((root / "config.json").string());
    out << run_config_json(config).dump(2) << '\n';
  }

  Dataset ds;
  if (!config.preset.empty()) {
    std::string record;
    ds = generate_preset(config.preset, protocol.seed, &record);
    auto out = detail::open_output((root / "data" / "truth.jsonl").string());
    out << record;
  } else {
    ds.data = load_edges(config.edges);
    ds.phi = load_metadata(config.metadata, ds.data.node_ids, {config.standardize});
  }
  save_edges((root / "data" / "edges.csv").string(), ds.data);

  std::vector<MaskedData> split;
  if (!config.mask.empty()) {
    auto mask = load_mask(config.mask);
    split.push_back({apply_mask(ds.data, mask), mask});
  } else {
    for (int k = 0; k < config.masks; ++k)
      split.push_back(make_mask(ds.data, config.mask_p, mask_seed(protocol.seed, k)));
  }
  const int masks = static_cast<int>(split.size());
  for (int k = 0; k < masks; ++k) {
    fs::create_directories(root / detail::mask_dir_name(k));
    auto out = detail::open_output((root / detail::mask_dir_name(k) / "mask.csv").string());
    write_mask(out, split[k].mask);
  }

  std::vector<std::vector<ChainRun>> runs(masks, std::vector<ChainRun>(protocol.chains));
  parallel_for(masks * protocol.chains, protocol.threads, [&](int job) {
    int k = job / protocol.chains, c = job % protocol.chains;
    auto dir = root / detail::mask_dir_name(k) / ("chain_" + std::to_string(c));
    runs[k][c] = detail::run_chain_in(dir, split[k].train, ds.phi, protocol, chain_rng(protocol.seed, k, c),
                                      config.checkpoint_every);
  });

  AucSummary summary;
  for (int k = 0; k < masks; ++k) {
    auto res = score_mask(ds.data, split[k].mask, runs[k], protocol.selection);
    auto out = detail::open_output((root / detail::mask_dir_name(k) / "predictions.csv").string());
    write_predictions(out, res.predictions);
    summary.per_mask.push_back(res.auc);
  }
  auto out = detail::open_output((root / "auc.txt").string());
  write_auc_report(out, summary);
  return summary;
}

}  // namespace nmdr
