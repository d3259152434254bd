#pragma once

#include "nmdr/predict.hpp"
#include "nmdr/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace nmdr {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double x;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return x;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  long long x;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return x;
}

inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline std::string join(const std::vector<std::string>& xs, char sep = ',') {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += sep;
    out += xs[k];
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

/// Parses `#key: value` comment directives; returns nothing for plain comments.
inline std::optional<std::pair<std::string, std::string>> directive(std::string_view line) {
  auto colon = line.find(':');
  if (line.empty() || line.front() != '#' || colon == std::string_view::npos) return std::nullopt;
  return std::pair{std::string(trim(line.substr(1, colon - 1))), std::string(trim(line.substr(colon + 1)))};
}

class IdMap {
 public:
  explicit IdMap(std::vector<std::string>& names) : names_(names) {}
  int operator()(const std::string& id) {
    auto [it, fresh] = index_.emplace(id, static_cast<int>(names_.size()));
    if (fresh) names_.push_back(id);
    return it->second;
  }

 private:
  std::vector<std::string>& names_;
  std::map<std::string, int> index_;
};

inline std::string node_name(const EdgeData& d, int i) {
  return i < static_cast<int>(d.node_ids.size()) ? d.node_ids[i] : std::to_string(i);
}

inline std::string relation_name(const EdgeData& d, int m) {
  return m < static_cast<int>(d.relation_ids.size()) ? d.relation_ids[m] : std::to_string(m);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Edge lists

/// Edge list CSV, one `src,dst,relation,value` line per listed entry with
/// value 0 or 1. Directives:
///   #default: absent|unobserved   state of unlisted pairs (absent if omitted)
///   #nodes: id,id,...             fixes node order, declares isolated nodes
///   #relations: id,...            fixes relation order
/// Other lines starting with '#' are comments; an optional `src,dst,...`
/// header is skipped. Node and relation ids map to dense indices in order of
/// first appearance; the maps are kept in EdgeData::node_ids / relation_ids.
inline EdgeData read_edges(std::istream& in, const std::string& source = "<edges>") {
  Obs fill = Obs::Absent;
  std::vector<std::string> nodes, relations;
  detail::IdMap node_id(nodes), rel_id(relations);
  struct Entry {
    Triple t;
    bool y;
    std::size_t line;
  };
  std::vector<Entry> entries;

  std::string raw;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no);
    if (line.front() == '#') {
      auto d = detail::directive(line);
      if (!d) continue;
      if (d->first == "default") {
        if (d->second == "absent") fill = Obs::Absent;
        else if (d->second == "unobserved") fill = Obs::Unobserved;
        else throw DataError(where + ": unknown default directive '" + d->second + "'");
      } else if (d->first == "nodes") {
        for (auto& id : detail::split_csv(d->second))
          if (!id.empty()) node_id(id);
      } else if (d->first == "relations") {
        for (auto& id : detail::split_csv(d->second))
          if (!id.empty()) rel_id(id);
      }
      continue;
    }
    auto cells = detail::split_csv(line);
    if (header_allowed && cells.size() == 4 && cells[0] == "src" && cells[1] == "dst") {
      header_allowed = false;
      continue;
    }
    header_allowed = false;
    if (cells.size() != 4 || cells[0].empty() || cells[1].empty() || cells[2].empty())
      throw DataError(where + ": expected src,dst,relation,value");
    if (cells[3] != "0" && cells[3] != "1") throw DataError(where + ": value must be 0 or 1");
    if (cells[0] == cells[1]) throw DataError(where + ": self-pair on node '" + cells[0] + "' is not supported");
    entries.push_back({{node_id(cells[0]), node_id(cells[1]), rel_id(cells[2])}, cells[3] == "1", line_no});
  }
  if (nodes.empty() || relations.empty()) throw DataError(source + ": no edges");

  EdgeData data(static_cast<int>(nodes.size()), static_cast<int>(relations.size()), fill);
  std::map<Triple, bool> seen;
  for (const auto& e : entries) {
    auto [it, fresh] = seen.try_emplace(e.t, e.y);
    if (!fresh && it->second != e.y)
      throw DataError(source + ":" + std::to_string(e.line) + ": conflicting duplicate for (" + nodes[e.t.i] + "," +
                      nodes[e.t.j] + "," + relations[e.t.m] + ")");
    data.set(e.t.i, e.t.j, e.t.m, e.y ? Obs::Present : Obs::Absent);
  }
  data.node_ids = std::move(nodes);
  data.relation_ids = std::move(relations);
  return data;
}

inline EdgeData load_edges(const std::string& path) {
  auto in = detail::open_input(path);
  return read_edges(in, path);
}

/// Writes the smallest listing that reads back to the same tensor: fully
/// observed data lists only present edges under `#default: absent`.
inline void write_edges(std::ostream& os, const EdgeData& d) {
  bool complete = true;
  for (int m = 0; m < d.M() && complete; ++m)
    for (int i = 0; i < d.N() && complete; ++i)
      for (int j = 0; j < d.N(); ++j)
        if (i != j && !d.observed(i, j, m)) {
          complete = false;
          break;
        }
  std::vector<std::string> nodes, rels;
  for (int i = 0; i < d.N(); ++i) nodes.push_back(detail::node_name(d, i));
  for (int m = 0; m < d.M(); ++m) rels.push_back(detail::relation_name(d, m));
  os << "#default: " << (complete ? "absent" : "unobserved") << '\n';
  os << "#nodes: " << detail::join(nodes) << '\n';
  os << "#relations: " << detail::join(rels) << '\n';
  os << "src,dst,relation,value\n";
  for (const auto& e : d.observed_edges()) {
    if (complete && !e.y) continue;
    os << nodes[e.i] << ',' << nodes[e.j] << ',' << rels[e.m] << ',' << int(e.y) << '\n';
  }
}

inline void save_edges(const std::string& path, const EdgeData& d) {
  auto out = detail::open_output(path);
  write_edges(out, d);
}

// ---------------------------------------------------------------------------
// Metadata

struct MetadataOptions {
  bool standardize = true;
};

/// Metadata CSV: header `node,<feature>,...`, one row per node id. Columns
/// whose cells all parse as numbers are numeric (standardized by default);
/// any other column, or one whose header ends in `:cat`, is one-hot encoded
/// with levels in sorted order. An intercept feature is always first.
inline Metadata read_metadata(std::istream& in, const std::vector<std::string>& node_ids,
                              MetadataOptions opts = {}, const std::string& source = "<metadata>") {
  std::string raw;
  std::vector<std::string> header;
  std::map<std::string, std::vector<std::string>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto cells = detail::split_csv(line);
    if (header.empty()) {
      header = cells;
      if (header.size() < 1) throw DataError(source + ": empty header");
      continue;
    }
    const auto where = source + ":" + std::to_string(line_no);
    if (cells.size() != header.size()) throw DataError(where + ": expected " + std::to_string(header.size()) + " cells");
    for (std::size_t c = 1; c < cells.size(); ++c)
      if (cells[c].empty()) throw DataError(where + ": empty cell in column '" + header[c] + "'");
    auto id = cells[0];
    if (!rows.emplace(id, std::move(cells)).second) throw DataError(where + ": duplicate node '" + id + "'");
  }
  if (header.empty()) throw DataError(source + ": no header row");

  const int N = static_cast<int>(node_ids.size());
  std::vector<const std::vector<std::string>*> ordered;
  for (const auto& id : node_ids) {
    auto it = rows.find(id);
    if (it == rows.end()) throw DataError(source + ": no metadata row for node '" + id + "'");
    ordered.push_back(&it->second);
  }

  std::vector<std::vector<double>> features{std::vector<double>(N, 1.0)};
  std::vector<std::string> names{"intercept"};
  for (std::size_t c = 1; c < header.size(); ++c) {
    std::string name = header[c];
    bool categorical = name.size() > 4 && name.ends_with(":cat");
    if (categorical) name.resize(name.size() - 4);
    std::vector<double> numeric(N);
    if (!categorical) {
      for (int i = 0; i < N; ++i) {
        auto x = detail::parse_double((*ordered[i])[c]);
        if (!x) {
          categorical = true;
          break;
        }
        if (!std::isfinite(*x))
          throw DataError(source + ": non-finite value for node '" + node_ids[i] + "' in column '" + name + "'");
        numeric[i] = *x;
      }
    }
    if (categorical) {
      std::map<std::string, int> levels;
      for (int i = 0; i < N; ++i) levels.emplace((*ordered[i])[c], 0);
      for (auto& [level, idx] : levels) {
        std::vector<double> col(N);
        for (int i = 0; i < N; ++i) col[i] = (*ordered[i])[c] == level ? 1.0 : 0.0;
        features.push_back(std::move(col));
        names.push_back(name + "=" + level);
      }
    } else {
      if (opts.standardize) {
        double mean = 0.0, var = 0.0;
        for (double x : numeric) mean += x;
        mean /= N;
        for (double x : numeric) var += (x - mean) * (x - mean);
        double sd = std::sqrt(var / N);
        for (double& x : numeric) x = sd > 0.0 ? (x - mean) / sd : 0.0;
      }
      features.push_back(std::move(numeric));
      names.push_back(name);
    }
  }

  Metadata md;
  md.phi.resize(static_cast<int>(features.size()), N);
  for (std::size_t f = 0; f < features.size(); ++f)
    for (int i = 0; i < N; ++i) md.phi(static_cast<int>(f), i) = features[f][i];
  md.feature_names = std::move(names);
  return md;
}

/// An empty path yields the intercept-only design.
inline Metadata load_metadata(const std::string& path, const std::vector<std::string>& node_ids,
                              MetadataOptions opts = {}) {
  if (path.empty()) return Metadata::intercept_only(static_cast<int>(node_ids.size()));
  auto in = detail::open_input(path);
  return read_metadata(in, node_ids, opts, path);
}

inline void write_metadata(std::ostream& os, const Metadata& md, const std::vector<std::string>& node_ids) {
  os << "node";
  for (int f = 1; f < md.F(); ++f)
    os << ',' << (f < static_cast<int>(md.feature_names.size()) ? md.feature_names[f] : "f" + std::to_string(f));
  os << '\n';
  for (int i = 0; i < md.N(); ++i) {
    os << node_ids[i];
    for (int f = 1; f < md.F(); ++f) os << ',' << detail::format_double(md.phi(f, i));
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Masks: `#seed:` and `#p:` directives, then `i,j,m` rows of hidden entries.

inline void write_mask(std::ostream& os, const Mask& mask) {
  os << "#seed: " << mask.seed << '\n' << "#p: " << detail::format_double(mask.p) << '\n' << "i,j,m\n";
  for (const auto& t : mask.hidden) os << t.i << ',' << t.j << ',' << t.m << '\n';
}

inline Mask read_mask(std::istream& in, const std::string& source = "<mask>") {
  Mask mask;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line == "i,j,m") continue;
    if (auto d = detail::directive(line)) {
      if (d->first == "seed") mask.seed = static_cast<std::uint64_t>(detail::parse_int(d->second).value_or(0));
      if (d->first == "p") mask.p = detail::parse_double(d->second).value_or(mask.p);
      continue;
    }
    if (line.front() == '#') continue;
    auto cells = detail::split_csv(line);
    auto i = cells.size() == 3 ? detail::parse_int(cells[0]) : std::nullopt;
    auto j = cells.size() == 3 ? detail::parse_int(cells[1]) : std::nullopt;
    auto m = cells.size() == 3 ? detail::parse_int(cells[2]) : std::nullopt;
    if (!i || !j || !m) throw DataError(source + ":" + std::to_string(line_no) + ": expected i,j,m");
    mask.hidden.push_back({static_cast<int>(*i), static_cast<int>(*j), static_cast<int>(*m)});
  }
  return mask;
}

inline Mask load_mask(const std::string& path) {
  auto in = detail::open_input(path);
  return read_mask(in, path);
}

/// Applies a stored mask to data, checking the hidden entries were observed.
inline EdgeData apply_mask(const EdgeData& data, const Mask& mask) {
  EdgeData train = data;
  for (const auto& t : mask.hidden) {
    if (t.i < 0 || t.j < 0 || t.m < 0 || t.i >= data.N() || t.j >= data.N() || t.m >= data.M() ||
        !data.observed(t.i, t.j, t.m))
      throw DataError("mask entry (" + std::to_string(t.i) + "," + std::to_string(t.j) + "," + std::to_string(t.m) +
                      ") is not an observed entry");
    train.set(t.i, t.j, t.m, Obs::Unobserved);
  }
  if (train.observed_count() == 0) throw DataError("mask hides every observed entry");
  return train;
}

// ---------------------------------------------------------------------------
// Prediction tables: `i,j,m,p_hat,y_true`, y_true empty when unknown.

inline void write_predictions(std::ostream& os, const PredictionTable& t) {
  os << "i,j,m,p_hat,y_true\n";
  for (const auto& r : t) {
    os << r.i << ',' << r.j << ',' << r.m << ',' << detail::format_double(r.p_hat) << ',';
    if (r.y_true) os << *r.y_true;
    os << '\n';
  }
}

inline PredictionTable read_predictions(std::istream& in, const std::string& source = "<predictions>") {
  PredictionTable t;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.starts_with("i,j,m")) continue;
    auto cells = detail::split_csv(line);
    const auto where = source + ":" + std::to_string(line_no);
    if (cells.size() != 5) throw DataError(where + ": expected i,j,m,p_hat,y_true");
    auto i = detail::parse_int(cells[0]), j = detail::parse_int(cells[1]), m = detail::parse_int(cells[2]);
    auto p = detail::parse_double(cells[3]);
    if (!i || !j || !m || !p || *p < 0.0 || *p > 1.0) throw DataError(where + ": malformed row");
    PredictionRow row{static_cast<int>(*i), static_cast<int>(*j), static_cast<int>(*m), *p, std::nullopt};
    if (!cells[4].empty()) {
      if (cells[4] != "0" && cells[4] != "1") throw DataError(where + ": y_true must be 0, 1 or empty");
      row.y_true = cells[4] == "1";
    }
    t.push_back(row);
  }
  return t;
}

// ---------------------------------------------------------------------------
// AUC report: `key = value` lines, one per mask, then count, mean and sd.

struct AucSummary {
  std::vector<double> per_mask;

  double mean() const {
    double s = 0.0;
    for (double x : per_mask) s += x;
    return per_mask.empty() ? 0.0 : s / per_mask.size();
  }
  double sd() const {
    if (per_mask.size() < 2) return 0.0;
    double m = mean(), s = 0.0;
    for (double x : per_mask) s += (x - m) * (x - m);
    return std::sqrt(s / (per_mask.size() - 1));
  }
};

inline void write_auc_report(std::ostream& os, const AucSummary& s) {
  for (std::size_t k = 0; k < s.per_mask.size(); ++k)
    os << "mask_" << k << " = " << detail::format_double(s.per_mask[k]) << '\n';
  os << "masks = " << s.per_mask.size() << '\n';
  os << "mean = " << detail::format_double(s.mean()) << '\n';
  os << "sd = " << detail::format_double(s.sd()) << '\n';
}

inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string raw;
  while (std::getline(in, raw)) {
    auto line = detail::trim(raw);
    auto eq = line.find('=');
    if (line.empty() || line.front() == '#' || eq == std::string_view::npos) continue;
    kv[std::string(detail::trim(line.substr(0, eq)))] = std::string(detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

}  // namespace nmdr
