#pragma once

#include "nmdr/chain.hpp"
#include "nmdr/predict.hpp"

#include "json.hpp"

#include <istream>
#include <ostream>
#include <string>

namespace nmdr {

// Checkpoints are one JSON document holding every non-derived ChainState
// field. Doubles are written in shortest round-trip form and the RNG engine
// state is stored verbatim, so a restored chain continues bit-identically.
//
//   format        "nmdr-checkpoint/1"
//   iter          completed sweeps
//   hyper         {a_F, b_F, a_S, b_S, a_V, b_V, gamma_a, gamma_b}
//   config        {truncation, walk_cap, mh_proposals, v_proposal, freeze_lambda_V}
//   rng           engine state text
//   lambda_S, lambda_F, lambda_V
//   mu            [F]
//   eta           F rows of K
//   v             K rows of N
//   phi           F rows of N, feature_names [F]
//   data          {N, M, obs}: obs is N*N*M chars ('0','1','.') in (m,i,j) order
//   node_ids, relation_ids
//   s, r          indicator per observed entry, (m,i,j) order

namespace detail {

inline nlohmann::json to_rows(const Eigen::MatrixXd& m) { return matrix_rows(m); }

inline Eigen::MatrixXd from_rows(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  if (static_cast<Eigen::Index>(j.size()) != rows) throw DataError("checkpoint matrix has wrong row count");
  for (Eigen::Index a = 0; a < rows; ++a) {
    if (static_cast<Eigen::Index>(j[a].size()) != cols) throw DataError("checkpoint matrix has wrong column count");
    for (Eigen::Index b = 0; b < cols; ++b) m(a, b) = j[a][b].get<double>();
  }
  return m;
}

inline nlohmann::json hyper_json(const HyperParams& h) {
  return {{"a_F", h.a_F}, {"b_F", h.b_F}, {"a_S", h.a_S}, {"b_S", h.b_S},
          {"a_V", h.a_V}, {"b_V", h.b_V}, {"gamma_a", h.gamma_a}, {"gamma_b", h.gamma_b}};
}

inline HyperParams hyper_from_json(const nlohmann::json& j, HyperParams h = {}) {
  h.a_F = j.value("a_F", h.a_F);
  h.b_F = j.value("b_F", h.b_F);
  h.a_S = j.value("a_S", h.a_S);
  h.b_S = j.value("b_S", h.b_S);
  h.a_V = j.value("a_V", h.a_V);
  h.b_V = j.value("b_V", h.b_V);
  h.gamma_a = j.value("gamma_a", h.gamma_a);
  h.gamma_b = j.value("gamma_b", h.gamma_b);
  return h;
}

inline nlohmann::json config_json(const ChainConfig& c) {
  return {{"truncation", c.truncation},
          {"walk_cap", c.walk_cap},
          {"mh_proposals", c.mh_proposals},
          {"v_proposal", c.v_proposal == VProposal::Column ? "column"
                         : c.v_proposal == VProposal::Coordinate ? "coordinate"
                                                                  : "laplace"},
          {"freeze_lambda_V", c.freeze_lambda_V},
          {"init", c.init == InitIndicators::Prior ? "prior" : c.init == InitIndicators::Spectral ? "spectral" : "single"},
          {"init_communities", c.init_communities},
          {"init_rounds", c.init_rounds}};
}

inline ChainConfig config_from_json(const nlohmann::json& j, ChainConfig c = {}) {
  c.truncation = j.value("truncation", c.truncation);
  c.walk_cap = j.value("walk_cap", c.walk_cap);
  c.mh_proposals = j.value("mh_proposals", c.mh_proposals);
  if (j.contains("v_proposal")) {
    auto p = j["v_proposal"].get<std::string>();
    if (p == "column") c.v_proposal = VProposal::Column;
    else if (p == "coordinate") c.v_proposal = VProposal::Coordinate;
    else if (p == "laplace") c.v_proposal = VProposal::Laplace;
    else throw UsageError("unknown v_proposal '" + p + "'");
  }
  c.freeze_lambda_V = j.value("freeze_lambda_V", c.freeze_lambda_V);
  c.init_communities = j.value("init_communities", c.init_communities);
  c.init_rounds = j.value("init_rounds", c.init_rounds);
  if (j.contains("init")) {
    auto p = j["init"].get<std::string>();
    if (p == "single") c.init = InitIndicators::SingleCommunity;
    else if (p == "prior") c.init = InitIndicators::Prior;
    else if (p == "spectral") c.init = InitIndicators::Spectral;
    else throw UsageError("unknown indicator initialization '" + p + "'");
  }
  return c;
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const ChainState& st) {
  using nlohmann::json;
  std::string obs;
  obs.reserve(static_cast<std::size_t>(st.N()) * st.N() * st.M());
  for (int m = 0; m < st.M(); ++m)
    for (int i = 0; i < st.N(); ++i)
      for (int j = 0; j < st.N(); ++j) {
        Obs o = st.data.at(i, j, m);
        obs += o == Obs::Present ? '1' : o == Obs::Absent ? '0' : '.';
      }
  std::vector<double> mu(st.global.mu.data(), st.global.mu.data() + st.global.mu.size());
  return json{{"format", "nmdr-checkpoint/1"},
              {"iter", st.iter},
              {"hyper", detail::hyper_json(st.hyper)},
              {"config", detail::config_json(st.config)},
              {"rng", st.rng.state()},
              {"lambda_S", st.global.lambda_S},
              {"lambda_F", st.global.lambda_F},
              {"lambda_V", st.global.lambda_V},
              {"K", st.K()},
              {"F", st.F()},
              {"mu", mu},
              {"eta", detail::to_rows(st.global.eta)},
              {"v", detail::to_rows(st.nodes.v)},
              {"phi", detail::to_rows(st.phi.phi)},
              {"feature_names", st.phi.feature_names},
              {"data", {{"N", st.N()}, {"M", st.M()}, {"obs", obs}}},
              {"node_ids", st.data.node_ids},
              {"relation_ids", st.data.relation_ids},
              {"s", st.assign.s},
              {"r", st.assign.r}};
}

inline ChainState chain_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "nmdr-checkpoint/1") throw DataError("not an nmdr checkpoint");
  ChainState st;
  st.iter = j.at("iter").get<long>();
  st.hyper = detail::hyper_from_json(j.at("hyper"));
  st.config = detail::config_from_json(j.at("config"));
  st.rng.set_state(j.at("rng").get<std::string>());
  const int K = j.at("K").get<int>(), F = j.at("F").get<int>();
  const int N = j.at("data").at("N").get<int>(), M = j.at("data").at("M").get<int>();

  st.data = EdgeData(N, M, Obs::Unobserved);
  const auto obs = j.at("data").at("obs").get<std::string>();
  if (obs.size() != static_cast<std::size_t>(N) * N * M) throw DataError("checkpoint observation block has wrong size");
  std::size_t p = 0;
  for (int m = 0; m < M; ++m)
    for (int i = 0; i < N; ++i)
      for (int jj = 0; jj < N; ++jj, ++p)
        st.data.set(i, jj, m, obs[p] == '1' ? Obs::Present : obs[p] == '0' ? Obs::Absent : Obs::Unobserved);
  st.data.node_ids = j.value("node_ids", std::vector<std::string>{});
  st.data.relation_ids = j.value("relation_ids", std::vector<std::string>{});

  st.phi.phi = detail::from_rows(j.at("phi"), F, N);
  st.phi.feature_names = j.value("feature_names", std::vector<std::string>{});
  st.global.lambda_S = j.at("lambda_S").get<double>();
  st.global.lambda_F = j.at("lambda_F").get<double>();
  st.global.lambda_V = j.at("lambda_V").get<double>();
  auto mu = j.at("mu").get<std::vector<double>>();
  st.global.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  st.global.eta = detail::from_rows(j.at("eta"), F, K);
  st.nodes.v = detail::from_rows(j.at("v"), K, N);

  detail::finish_setup(st);
  st.assign.s = j.at("s").get<std::vector<int>>();
  st.assign.r = j.at("r").get<std::vector<int>>();
  if (st.assign.s.size() != st.edges.size() || st.assign.r.size() != st.edges.size())
    throw DataError("checkpoint indicators do not match observed entries");
  for (std::size_t e = 0; e < st.edges.size(); ++e)
    if (st.assign.s[e] < 0 || st.assign.s[e] >= K || st.assign.r[e] < 0 || st.assign.r[e] >= K)
      throw DataError("checkpoint indicator out of range");
  rebuild_counts(st);
  return st;
}

inline void write_checkpoint(std::ostream& os, const ChainState& st) { os << checkpoint_json(st).dump() << '\n'; }

inline ChainState read_checkpoint(std::istream& in) { return chain_from_json(nlohmann::json::parse(in)); }

// ---------------------------------------------------------------------------
// Trace lines and stored posterior samples (JSON lines).

inline std::string trace_line(const SweepReport& r) {
  return nlohmann::json{{"iter", r.iter},
                        {"log_joint", r.log_joint},
                        {"K_occupied", r.K_occupied},
                        {"K_instantiated", r.K_instantiated},
                        {"mh_accept_rate", r.mh_accept_rate},
                        {"born", r.new_communities_born}}
      .dump();
}

inline SweepReport parse_trace_line(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  SweepReport r;
  r.iter = j.at("iter").get<long>();
  r.log_joint = j.at("log_joint").get<double>();
  r.K_occupied = j.at("K_occupied").get<int>();
  r.K_instantiated = j.at("K_instantiated").get<int>();
  r.mh_accept_rate = j.at("mh_accept_rate").get<double>();
  r.new_communities_born = j.value("born", 0);
  return r;
}

/// One retained posterior sample: stick weights plus nonzero count cells.
inline std::string sample_line(const PredictiveSample& s, long iter) {
  using nlohmann::json;
  auto cells = json::array();
  for (int m = 0; m < s.M; ++m)
    for (int k = 0; k < s.K; ++k)
      for (int l = 0; l < s.K; ++l)
        if (s.A(k, l, m) + s.B(k, l, m) > 0) cells.push_back({k, l, m, s.A(k, l, m), s.B(k, l, m)});
  std::vector<double> tail(s.tail.data(), s.tail.data() + s.tail.size());
  return json{{"iter", iter},
              {"N", s.N},
              {"M", s.M},
              {"K", s.K},
              {"gamma_a", s.gamma_a},
              {"gamma_b", s.gamma_b},
              {"log_joint", s.log_joint},
              {"pi", detail::to_rows(s.pi)},
              {"tail", tail},
              {"counts", cells}}
      .dump();
}

inline PredictiveSample parse_sample_line(const std::string& line) {
  auto j = nlohmann::json::parse(line);
  PredictiveSample s;
  s.N = j.at("N").get<int>();
  s.M = j.at("M").get<int>();
  s.K = j.at("K").get<int>();
  s.gamma_a = j.at("gamma_a").get<double>();
  s.gamma_b = j.at("gamma_b").get<double>();
  s.log_joint = j.value("log_joint", 0.0);
  s.pi = detail::from_rows(j.at("pi"), s.K, s.N);
  auto tail = j.at("tail").get<std::vector<double>>();
  s.tail = Eigen::Map<Eigen::VectorXd>(tail.data(), static_cast<Eigen::Index>(tail.size()));
  s.A = CountTable(s.K, s.M);
  s.B = CountTable(s.K, s.M);
  for (const auto& c : j.at("counts")) {
    int k = c[0], l = c[1], m = c[2];
    s.A(k, l, m) = c[3].get<int>();
    s.B(k, l, m) = c[4].get<int>();
  }
  return s;
}

}  // namespace nmdr
