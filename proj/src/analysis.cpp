// SPDX-License-Identifier: Apache-2.0
#include "cqr/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "cqr/error.hpp"
#include "cqr/evaluation.hpp"

namespace cqr::analysis {

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      cur.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<double> overlap_pct(std::string_view human, std::string_view rewrite) {
  const auto h = tokens(human);
  const std::set<std::string> hs(h.begin(), h.end());
  if (hs.empty()) return std::nullopt;
  const auto r = tokens(rewrite);
  const std::set<std::string> rs(r.begin(), r.end());
  std::size_t common = 0;
  for (const auto& t : hs) common += rs.count(t);
  return 100.0 * static_cast<double>(common) / static_cast<double>(hs.size());
}

double rouge1(std::string_view candidate, std::string_view reference) {
  const auto c = tokens(candidate);
  const auto r = tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& t : r) ++ref_counts[t];
  std::size_t hits = 0;
  for (const auto& t : c) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++hits;
    }
  }
  if (hits == 0) return 0.0;
  const double p = static_cast<double>(hits) / static_cast<double>(c.size());
  const double rec = static_cast<double>(hits) / static_cast<double>(r.size());
  return 2.0 * p * rec / (p + rec);
}

json to_json(const RewriteStats& s) {
  json j{{"method", s.method}, {"subset", s.subset}, {"records", s.records}, {"AT", s.avg_tokens}};
  j["OT"] = s.overlap_pct ? json(*s.overlap_pct) : json(nullptr);
  j["rouge1"] = s.rouge1 ? json(*s.rouge1) : json(nullptr);
  j["mean_latency_ms"] = s.mean_latency_ms ? json(*s.mean_latency_ms) : json(nullptr);
  j["overlap_records"] = s.overlap_records;
  return j;
}

namespace {

struct Acc {
  std::size_t n = 0;
  double tokens = 0;
  std::size_t n_ot = 0;
  double ot = 0;
  double rouge = 0;
  std::size_t n_lat = 0;
  double lat = 0;
};

}  // namespace

std::vector<RewriteStats> rewrite_stats(const std::vector<rewriter::RewriteRecord>& records,
                                        const rewriter::RewriteMap& humans,
                                        const std::map<std::string, corpus::Subset>& subset_of) {
  if (records.empty()) throw InputError("rewrite_stats: no records");
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto& r : records) {
    const std::string method(rewriter::to_string(r.method));
    std::vector<std::string> groups{std::string(kAllSubset)};
    if (auto it = subset_of.find(r.query_id()); it != subset_of.end()) {
      groups.emplace_back(corpus::to_string(it->second));
    }
    const double n_tokens = static_cast<double>(tokens(r.rewrite).size());
    std::optional<double> ot;
    double rg = 0;
    if (auto h = humans.find(r.query_id()); h != humans.end()) {
      ot = overlap_pct(h->second, r.rewrite);
      rg = rouge1(r.rewrite, h->second);
    }
    for (const auto& g : groups) {
      auto& a = acc[{method, g}];
      ++a.n;
      a.tokens += n_tokens;
      if (ot) {
        ++a.n_ot;
        a.ot += *ot;
        a.rouge += rg;
      }
      if (r.latency_ms) {
        ++a.n_lat;
        a.lat += *r.latency_ms;
      }
    }
  }
  std::vector<RewriteStats> out;
  for (const auto& [key, a] : acc) {
    RewriteStats s;
    s.method = key.first;
    s.subset = key.second;
    s.records = a.n;
    s.avg_tokens = a.tokens / static_cast<double>(a.n);
    s.overlap_records = a.n_ot;
    if (a.n_ot > 0) {
      s.overlap_pct = a.ot / static_cast<double>(a.n_ot);
      s.rouge1 = 100.0 * a.rouge / static_cast<double>(a.n_ot);
    }
    if (a.n_lat > 0) s.mean_latency_ms = a.lat / static_cast<double>(a.n_lat);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<LatencyStats> latency_stats(const std::vector<rewriter::RewriteRecord>& records) {
  std::map<std::string, std::vector<double>> by_method;
  for (const auto& r : records) {
    if (r.latency_ms) by_method[std::string(rewriter::to_string(r.method))].push_back(*r.latency_ms);
  }
  if (by_method.empty()) throw InputError("latency_stats: no timed records");
  std::vector<LatencyStats> out;
  for (auto& [method, v] : by_method) {
    std::sort(v.begin(), v.end());
    LatencyStats s;
    s.method = method;
    s.timed = v.size();
    double sum = 0;
    for (double x : v) sum += x;
    s.mean_ms = sum / static_cast<double>(v.size());
    const std::size_t n = v.size();
    s.median_ms = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    s.p95_ms = v[std::max<std::size_t>(rank, 1) - 1];
    out.push_back(std::move(s));
  }
  return out;
}

json to_json(const LatencyStats& s) {
  return json{{"method", s.method}, {"timed", s.timed}, {"mean_ms", s.mean_ms}, {"median_ms", s.median_ms},
              {"p95_ms", s.p95_ms}};
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w, bool right) {
  if (s.size() >= w) return s;
  return right ? std::string(w - s.size(), ' ') + s : s + std::string(w - s.size(), ' ');
}

}  // namespace

std::string render_stats_table(const std::vector<RewriteStats>& stats) {
  const std::vector<std::pair<std::string, std::string>> columns{
      {kAllSubset, "QReCC"}, {"QuAC", "QuAC-Conv"}, {"NQ", "NQ-Conv"}, {"TREC", "TREC-Conv"}};
  std::vector<std::string> methods;
  std::map<std::pair<std::string, std::string>, const RewriteStats*> cell;
  for (const auto& s : stats) {
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) methods.push_back(s.method);
    cell[{s.method, s.subset}] = &s;
  }
  std::size_t w0 = 6;
  for (const auto& m : methods) w0 = std::max(w0, m.size());
  constexpr std::size_t w = 8;

  std::ostringstream os;
  os << pad("", w0, false);
  for (const auto& [key, title] : columns) os << " | " << pad(title, 2 * w + 1, false);
  os << '\n' << pad("Method", w0, false);
  for (std::size_t i = 0; i < columns.size(); ++i) os << " | " << pad("AT", w, true) << ' ' << pad("OT", w, true);
  os << '\n' << std::string(w0, '-');
  for (std::size_t i = 0; i < columns.size(); ++i) os << "-+-" << std::string(2 * w + 1, '-');
  os << '\n';
  for (const auto& m : methods) {
    os << pad(m, w0, false);
    for (const auto& [key, title] : columns) {
      auto it = cell.find({m, key});
      std::string at = "-", ot = "-";
      if (it != cell.end()) {
        at = fixed2(it->second->avg_tokens);
        if (it->second->overlap_pct) ot = fixed2(*it->second->overlap_pct);
      }
      os << " | " << pad(at, w, true) << ' ' << pad(ot, w, true);
    }
    os << '\n';
  }
  return os.str();
}

std::string render_latency_table(const std::vector<LatencyStats>& stats) {
  std::ostringstream os;
  std::size_t w0 = 6;
  for (const auto& s : stats) w0 = std::max(w0, s.method.size());
  os << pad("Method", w0, false) << " | " << pad("Latency", 14, true) << " | " << pad("median", 8, true) << " | "
     << pad("p95", 8, true) << " | timed\n";
  for (const auto& s : stats) {
    os << pad(s.method, w0, false) << " | " << pad(fixed2(s.mean_ms) + " (ms/q)", 14, true) << " | "
       << pad(fixed2(s.median_ms), 8, true) << " | " << pad(fixed2(s.p95_ms), 8, true) << " | " << s.timed << '\n';
  }
  return os.str();
}

}  // namespace cqr::analysis
