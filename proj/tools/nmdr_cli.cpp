#include "nmdr/nmdr.hpp"

#include "CLI11.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace nmdr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

const std::map<std::string, VProposal> kProposals{
    {"column", VProposal::Column}, {"coordinate", VProposal::Coordinate}, {"laplace", VProposal::Laplace}};
const std::map<std::string, InitIndicators> kInits{
    {"single", InitIndicators::SingleCommunity}, {"prior", InitIndicators::Prior}, {"spectral", InitIndicators::Spectral}};
const std::map<std::string, ChainSelection> kSelections{
    {"best-log-joint", ChainSelection::BestLogJoint}, {"pooled", ChainSelection::Pooled}};

template <class Map, class V>
std::string name_of(const Map& m, V v) {
  for (const auto& [k, x] : m)
    if (x == v) return k;
  return {};
}

// String views of the enum-valued settings; written back after parsing.
struct EnumFlags {
  std::string proposal, init, selection;
};

void add_protocol_flags(CLI::App* cmd, Protocol& p, EnumFlags& e) {
  auto& h = p.hyper;
  cmd->add_option("--a-F", h.a_F, "gamma shape of lambda_F")->capture_default_str();
  cmd->add_option("--b-F", h.b_F, "gamma rate of lambda_F")->capture_default_str();
  cmd->add_option("--a-S", h.a_S, "gamma shape of lambda_S")->capture_default_str();
  cmd->add_option("--b-S", h.b_S, "gamma rate of lambda_S")->capture_default_str();
  cmd->add_option("--a-V", h.a_V, "gamma shape of lambda_V")->capture_default_str();
  cmd->add_option("--b-V", h.b_V, "gamma rate of lambda_V")->capture_default_str();
  cmd->add_option("--gamma-a", h.gamma_a, "beta prior pseudo-count for present edges")->capture_default_str();
  cmd->add_option("--gamma-b", h.gamma_b, "beta prior pseudo-count for absent edges")->capture_default_str();

  auto& c = p.chain;
  cmd->add_option("--truncation", c.truncation, "fixed community count (0: unbounded)")->capture_default_str();
  cmd->add_option("--walk-cap", c.walk_cap, "communities one retrospective walk may instantiate")->capture_default_str();
  cmd->add_option("--mh-proposals", c.mh_proposals, "v proposals per node per sweep")->capture_default_str();
  e.proposal = name_of(kProposals, c.v_proposal);
  cmd->add_option("--v-proposal", e.proposal, "column, coordinate or laplace")
      ->check(CLI::IsMember({"column", "coordinate", "laplace"}))
      ->capture_default_str();
  cmd->add_flag("--freeze-lambda-V", c.freeze_lambda_V, "keep lambda_V at its initial draw");
  e.init = name_of(kInits, c.init);
  cmd->add_option("--init", e.init, "indicator initialization: single, prior or spectral")
      ->check(CLI::IsMember({"single", "prior", "spectral"}))
      ->capture_default_str();
  cmd->add_option("--init-communities", c.init_communities, "spectral clusters (0: eigengap)")->capture_default_str();
  cmd->add_option("--init-rounds", c.init_rounds, "conditional updates after spectral init")->capture_default_str();

  cmd->add_option("--chains", p.chains)->capture_default_str();
  cmd->add_option("--sweeps", p.sweeps)->capture_default_str();
  cmd->add_option("--burn-in", p.burn_in, "fraction of sweeps discarded")->capture_default_str();
  cmd->add_option("--max-samples", p.max_samples, "retained samples per chain after thinning")->capture_default_str();
  e.selection = name_of(kSelections, p.selection);
  cmd->add_option("--selection", e.selection, "best-log-joint or pooled")
      ->check(CLI::IsMember({"best-log-joint", "pooled"}))
      ->capture_default_str();
  cmd->add_option("--seed", p.seed)->capture_default_str();
  cmd->add_option("--threads", p.threads, "worker threads (0: all cores)")->capture_default_str();
}

void apply(const EnumFlags& e, Protocol& p) {
  p.chain.v_proposal = kProposals.at(e.proposal);
  p.chain.init = kInits.at(e.init);
  p.selection = kSelections.at(e.selection);
}

// `--config file.json` seeds every run setting before the flags are bound, so
// explicit flags override the file.
RunConfig prescan_config(int argc, char** argv) {
  for (int a = 1; a < argc; ++a) {
    std::string path;
    if (std::strcmp(argv[a], "--config") == 0 && a + 1 < argc) path = argv[a + 1];
    else if (std::strncmp(argv[a], "--config=", 9) == 0) path = argv[a] + 9;
    if (path.empty()) continue;
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    try {
      return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  return {};
}

EdgeData training_data(const RunConfig& cfg, EdgeData data) {
  if (cfg.mask.empty()) return data;
  return apply_mask(data, load_mask(cfg.mask));
}

void log_seed(const char* what, std::uint64_t seed) { std::cerr << what << " seed = " << seed << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonparametric metadata dependent relational model"};
  app.require_subcommand(1);

  RunConfig cfg;
  try {
    cfg = prescan_config(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  EnumFlags enums;

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic benchmark network");
  std::string gen_out, gen_truth;
  gen->add_option("--preset", cfg.preset, "synth-single or synth-mixed")
      ->required()
      ->check(CLI::IsMember({"synth-single", "synth-mixed"}));
  gen->add_option("--seed", cfg.protocol.seed)->capture_default_str();
  gen->add_option("--out", gen_out, "edge CSV")->required();
  gen->add_option("--truth", gen_truth, "JSON lines with the generating memberships and blocks");

  // mask
  auto* msk = app.add_subcommand("mask", "hide a random subset of observed entries");
  std::string mask_out;
  msk->add_option("--edges", cfg.edges)->required()->check(CLI::ExistingFile);
  msk->add_option("--p", cfg.mask_p, "probability of hiding each observed entry")->capture_default_str();
  msk->add_option("--seed", cfg.protocol.seed)->capture_default_str();
  msk->add_option("--out", mask_out)->required();

  // fit
  auto* fit = app.add_subcommand("fit", "run MCMC chains on the observed entries");
  fit->add_option("--edges", cfg.edges)->required()->check(CLI::ExistingFile);
  fit->add_option("--metadata", cfg.metadata)->check(CLI::ExistingFile);
  fit->add_option("--mask", cfg.mask, "entries to withhold from training")->check(CLI::ExistingFile);
  fit->add_option("--out", cfg.out_dir, "fit directory")->required();
  fit->add_option("--checkpoint-every", cfg.checkpoint_every)->capture_default_str();
  fit->add_flag("--standardize,!--no-standardize", cfg.standardize, "standardize numeric metadata");
  add_protocol_flags(fit, cfg.protocol, enums);
  fit->add_option("--config", "JSON run configuration supplying defaults");

  // predict
  auto* pred = app.add_subcommand("predict", "posterior-predictive link probabilities");
  std::string fit_dir, pred_out;
  std::string pred_selection = name_of(kSelections, cfg.protocol.selection);
  pred->add_option("--fit", fit_dir, "fit directory")->required()->check(CLI::ExistingDirectory);
  pred->add_option("--edges", cfg.edges, "edge CSV the fit was built from")->required()->check(CLI::ExistingFile);
  pred->add_option("--mask", cfg.mask, "score these entries (default: every unobserved pair)")
      ->check(CLI::ExistingFile);
  pred->add_option("--selection", pred_selection)
      ->check(CLI::IsMember({"best-log-joint", "pooled"}))
      ->capture_default_str();
  pred->add_option("--out", pred_out, "prediction CSV")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "AUC of prediction files");
  std::vector<std::string> eval_in;
  std::string eval_out;
  ev->add_option("--predictions", eval_in, "one or more prediction CSVs")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", eval_out, "write the AUC report here as well");

  // export-graph
  auto* eg = app.add_subcommand("export-graph", "affinity graph of learned memberships as DOT");
  int eg_chain = -1;
  double eg_threshold = 0.5;
  std::string eg_out, eg_edges, eg_distances;
  eg->add_option("--fit", fit_dir, "fit directory")->required()->check(CLI::ExistingDirectory);
  eg->add_option("--chain", eg_chain, "chain to read (default: best by mean log joint)");
  eg->add_option("--threshold", eg_threshold, "keep pairs with 1 - D above this")->capture_default_str();
  eg->add_option("--edges", eg_edges, "edge CSV supplying node labels")->check(CLI::ExistingFile);
  eg->add_option("--distances", eg_distances, "also write the distance matrix as CSV");
  eg->add_option("--out", eg_out, "DOT file")->required();

  // run
  auto* run = app.add_subcommand("run", "full masked link-prediction experiment");
  run->add_option("--preset", cfg.preset, "synth-single or synth-mixed instead of --edges")
      ->check(CLI::IsMember({"synth-single", "synth-mixed"}));
  run->add_option("--edges", cfg.edges)->check(CLI::ExistingFile);
  run->add_option("--metadata", cfg.metadata)->check(CLI::ExistingFile);
  run->add_option("--mask", cfg.mask, "use this single mask")->check(CLI::ExistingFile);
  run->add_option("--out", cfg.out_dir, "run directory")->capture_default_str();
  run->add_option("--masks", cfg.masks)->capture_default_str();
  run->add_option("--mask-p", cfg.mask_p)->capture_default_str();
  run->add_option("--checkpoint-every", cfg.checkpoint_every)->capture_default_str();
  run->add_flag("--standardize,!--no-standardize", cfg.standardize, "standardize numeric metadata");
  EnumFlags run_enums;
  add_protocol_flags(run, cfg.protocol, run_enums);
  run->add_option("--config", "JSON run configuration supplying defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      log_seed("generate", cfg.protocol.seed);
      std::string record;
      auto ds = generate_preset(cfg.preset, cfg.protocol.seed, gen_truth.empty() ? nullptr : &record);
      save_edges(gen_out, ds.data);
      if (!gen_truth.empty()) {
        auto out = detail::open_output(gen_truth);
        out << record;
      }
      std::cout << ds.data.N() << " nodes, " << ds.data.count(Obs::Present) << " present edges -> " << gen_out
                << '\n';
    } else if (*msk) {
      log_seed("mask", cfg.protocol.seed);
      auto data = load_edges(cfg.edges);
      auto masked = make_mask(data, cfg.mask_p, cfg.protocol.seed);
      auto out = detail::open_output(mask_out);
      write_mask(out, masked.mask);
      std::cout << masked.mask.hidden.size() << " of " << data.observed_count() << " observed entries hidden\n";
    } else if (*fit) {
      apply(enums, cfg.protocol);
      cfg.validate();
      log_seed("fit", cfg.protocol.seed);
      auto data = load_edges(cfg.edges);
      auto phi = load_metadata(cfg.metadata, data.node_ids, {cfg.standardize});
      auto train = training_data(cfg, data);
      fs::create_directories(cfg.out_dir);
      {
        auto out = detail::open_output((fs::path(cfg.out_dir) / "config.json").string());
        out << run_config_json(cfg).dump(2) << '\n';
      }
      auto runs = fit_chains(cfg.out_dir, train, phi, cfg.protocol, cfg.checkpoint_every);
      for (std::size_t c = 0; c < runs.size(); ++c)
        std::cout << "chain " << c << ": mean log joint " << runs[c].mean_log_joint << ", K_occupied mode "
                  << mode_of(runs[c].retained_K) << '\n';
    } else if (*pred) {
      auto data = load_edges(cfg.edges);
      std::vector<Triple> queries;
      const EdgeData* truth = nullptr;
      if (!cfg.mask.empty()) {
        auto mask = load_mask(cfg.mask);
        apply_mask(data, mask);
        queries = mask.hidden;
        truth = &data;
      } else {
        for (int m = 0; m < data.M(); ++m)
          for (int i = 0; i < data.N(); ++i)
            for (int j = 0; j < data.N(); ++j)
              if (i != j && !data.observed(i, j, m)) queries.push_back({i, j, m});
      }
      auto runs = read_fit_dir(fit_dir);
      auto sel = select_samples(runs, kSelections.at(pred_selection));
      if (sel.samples.empty()) throw DataError("fit directory holds no retained samples");
      if (sel.samples.front().N != data.N() || sel.samples.front().M != data.M())
        throw DataError("fit was built from a network of a different size");
      auto table = predict_links(sel.samples, queries, truth);
      auto out = detail::open_output(pred_out);
      write_predictions(out, table);
      std::cout << table.size() << " predictions from " << sel.samples.size() << " samples";
      if (sel.chain >= 0) std::cout << " (chain " << sel.chain << ")";
      std::cout << " -> " << pred_out << '\n';
    } else if (*ev) {
      AucSummary summary;
      for (const auto& path : eval_in) {
        auto in = detail::open_input(path);
        summary.per_mask.push_back(auc(read_predictions(in, path)));
      }
      write_auc_report(std::cout, summary);
      if (!eval_out.empty()) {
        auto out = detail::open_output(eval_out);
        write_auc_report(out, summary);
      }
    } else if (*eg) {
      auto runs = read_fit_dir(fit_dir);
      int c = eg_chain;
      if (c < 0) c = select_samples(runs, ChainSelection::BestLogJoint).chain;
      if (c >= static_cast<int>(runs.size())) throw UsageError("no chain " + std::to_string(c) + " in " + fit_dir);
      if (runs[c].samples.empty()) throw DataError("chain " + std::to_string(c) + " holds no retained samples");
      const auto& last = runs[c].samples.back();
      std::vector<StickWeights> sticks(last.N);
      for (int i = 0; i < last.N; ++i) {
        sticks[i].pi.assign(last.pi.col(i).data(), last.pi.col(i).data() + last.K);
        sticks[i].tail = last.tail(i);
      }
      auto D = variational_distance(sticks);
      auto graph = affinity_graph(D, eg_threshold, sticks);
      if (!eg_edges.empty()) graph.labels = load_edges(eg_edges).node_ids;
      auto out = detail::open_output(eg_out);
      write_dot(out, graph);
      if (!eg_distances.empty()) {
        auto dout = detail::open_output(eg_distances);
        for (int i = 0; i < D.rows(); ++i) {
          for (int j = 0; j < D.cols(); ++j) dout << (j ? "," : "") << detail::format_double(D(i, j));
          dout << '\n';
        }
      }
      std::cout << graph.edges.size() << " affinity edges among " << graph.N << " nodes -> " << eg_out << '\n';
    } else if (*run) {
      apply(run_enums, cfg.protocol);
      log_seed("run", cfg.protocol.seed);
      auto summary = run_experiment(cfg);
      write_auc_report(std::cout, summary);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
