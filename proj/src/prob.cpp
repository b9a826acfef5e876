#include "harmonize/prob.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "harmonize/errors.hpp"
#include "harmonize/special.hpp"

namespace harmonize {

bool ScoreDistribution::is_valid(double tol) const {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return std::fabs(sum - 1.0) <= tol;
}

ScoreDistribution ScoreDistribution::normalized(std::vector<double> weights, std::size_t count) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw DataError("cannot normalize a zero weight vector");
  for (double& w : weights) w /= total;
  return {std::move(weights), count};
}

bool CovariateCell::contains(const ObservationRecord& r) const {
  return r.group == group && std::fabs(r.age - age_center) <= half_width;
}

ScoreDistribution empirical(std::span<const int> scores, int support) {
  if (scores.empty()) throw DataError("empirical: no scores");
  std::vector<double> counts(support + 1, 0.0);
  for (int y : scores) {
    if (y < 0 || y > support) throw DataError("empirical: score outside {0..N}");
    counts[y] += 1.0;
  }
  const double n = static_cast<double>(scores.size());
  for (double& c : counts) c /= n;
  return {std::move(counts), scores.size()};
}

std::vector<ObservationRecord> filter_test(std::span<const ObservationRecord> records,
                                           const std::string& test_id) {
  std::vector<ObservationRecord> out;
  for (const auto& r : records) {
    if (r.test_id == test_id) out.push_back(r);
  }
  return out;
}

std::vector<ObservationRecord> first_visits(std::span<const ObservationRecord> records) {
  std::map<std::pair<std::string, std::string>, std::size_t> first;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto key = std::make_pair(records[i].test_id, records[i].subject_id);
    auto it = first.find(key);
    if (it == first.end()) {
      first.emplace(key, i);
    } else if (records[i].visit < records[it->second].visit) {
      it->second = i;
    }
  }
  std::vector<std::size_t> keep;
  keep.reserve(first.size());
  for (const auto& [key, idx] : first) keep.push_back(idx);
  std::sort(keep.begin(), keep.end());
  std::vector<ObservationRecord> out;
  out.reserve(keep.size());
  for (std::size_t idx : keep) out.push_back(records[idx]);
  return out;
}

ScoreDistribution conditional_empirical(std::span<const ObservationRecord> records,
                                        const CovariateCell& cell, int support) {
  std::vector<int> scores;
  for (const auto& r : first_visits(records)) {
    if (cell.contains(r)) scores.push_back(r.score);
  }
  if (scores.empty()) {
    std::ostringstream os;
    os << "no records in cell (group=" << cell.group << ", age=" << cell.age_center
       << " +/- " << cell.half_width << "); widen the window";
    throw NoDataError(os.str());
  }
  return empirical(scores, support);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: dimension mismatch");
  // Neumaier-compensated sum.
  double sum = 0.0;
  double comp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    const double term = p[i] * std::log(p[i] / q[i]);
    const double t = sum + term;
    comp += std::fabs(sum) >= std::fabs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return std::max(0.0, sum + comp);
}

double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q) {
  return kl_divergence(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
  return std::min(1.0, 0.5 * s);
}

double tv_distance(const ScoreDistribution& p, const ScoreDistribution& q) {
  return tv_distance(std::span<const double>(p.probs), std::span<const double>(q.probs));
}

double chi_square_sf(double t, double df) {
  if (t <= 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  return std::clamp(special::gamma_q(0.5 * df, 0.5 * t), 0.0, 1.0);
}

double multinomial_kl_tail_bound(double t, std::size_t n, std::size_t k) {
  if (!(t > 0.0)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double log_bound = (static_cast<double>(k) - 1.0) * std::log(n + 1.0) - static_cast<double>(n) * t;
  return log_bound >= 0.0 ? 1.0 : std::exp(log_bound);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::vector<ObservationRecord> read_records_csv(std::istream& in) {
  static const std::vector<std::string> kHeader{"subject_id", "visit", "test_id", "score", "age", "group"};
  std::string line;
  if (!std::getline(in, line)) throw DataError("records CSV: missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (split_csv_line(line) != kHeader) {
    throw DataError("records CSV: header must be subject_id,visit,test_id,score,age,group");
  }
  std::vector<ObservationRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != kHeader.size()) {
      throw DataError("records CSV line " + std::to_string(lineno) + ": expected 6 fields");
    }
    try {
      std::size_t pos = 0;
      ObservationRecord r;
      r.subject_id = f[0];
      r.visit = std::stoi(f[1], &pos);
      r.test_id = f[2];
      r.score = std::stoi(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("score");
      r.age = std::stod(f[4]);
      r.group = f[5];
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw DataError("records CSV line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return out;
}

std::vector<ObservationRecord> read_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file: " + path);
  return read_records_csv(in);
}

void write_records_csv(std::ostream& out, std::span<const ObservationRecord> records) {
  out << "subject_id,visit,test_id,score,age,group\n";
  for (const auto& r : records) {
    out << r.subject_id << ',' << r.visit << ',' << r.test_id << ',' << r.score << ','
        << r.age << ',' << r.group << '\n';
  }
}

}  // namespace harmonize

namespace harmonize {

std::size_t CovariateScheme::assign(const ObservationRecord& record) const {
  if (cells.empty()) return 0;
  std::size_t best = cells.size();
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].group != record.group) continue;
    const double d = std::fabs(cells[i].age_center - record.age);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  if (best == cells.size()) throw NoDataError("no covariate cell for group '" + record.group + "'");
  return best;
}

ScoreDistribution CovariateScheme::distribution(std::span<const ObservationRecord> records,
                                                std::size_t index, int support) const {
  if (cells.empty()) {
    std::vector<int> scores;
    for (const auto& r : first_visits(records)) scores.push_back(r.score);
    if (scores.empty()) throw NoDataError("no records for pooled cell");
    return empirical(scores, support);
  }
  // Nearest-center assignment, so every record lands in exactly one cell.
  const auto& cell = cells.at(index);
  std::vector<int> scores;
  for (const auto& r : first_visits(records)) {
    if (r.group == cell.group && assign(r) == index) scores.push_back(r.score);
  }
  if (scores.empty()) throw NoDataError("no records in cell " + label(index));
  return empirical(scores, support);
}

std::string CovariateScheme::label(std::size_t index) const {
  if (cells.empty()) return "all";
  const auto& c = cells.at(index);
  std::ostringstream os;
  os << c.group << "@" << c.age_center;
  return os.str();
}

CovariateScheme CovariateScheme::grid(const std::vector<std::string>& groups,
                                      const std::vector<double>& age_centers, double half_width) {
  if (!(half_width > 0.0)) throw ConfigError("covariate window half-width must be positive");
  CovariateScheme scheme;
  for (const auto& g : groups) {
    for (double a : age_centers) scheme.cells.push_back({g, a, half_width});
  }
  return scheme;
}

}  // namespace harmonize
