#include "gst/trial.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gst {

void DelayConfig::validate() const {
  if (!(d_l > 0.0) || !(d_l <= d_y)) throw std::invalid_argument("DelayConfig: need 0 < d_l <= d_y");
  if (!(enroll_rate > 0.0)) throw std::invalid_argument("DelayConfig: enroll_rate must be positive");
}

AnalysisSnapshot snapshot_at(std::vector<ParticipantRecord> records, double t,
                             const DelayConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw std::invalid_argument("snapshot_at: no records");
  AnalysisSnapshot s;
  s.analysis_time = t;
  s.c_l.resize(records.size());
  s.c_y.resize(records.size());
  std::size_t n_l = 0, n_y = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.enroll_time > t) throw std::invalid_argument("snapshot_at: record enrolled after analysis time");
    if (!std::isfinite(r.enroll_time) || r.enroll_time < 0.0)
      throw std::invalid_argument("snapshot_at: bad enroll_time");
    s.c_l[i] = (t >= r.enroll_time + cfg.d_l) ? 1 : 0;
    s.c_y[i] = (t >= r.enroll_time + cfg.d_y) ? 1 : 0;
    n_l += s.c_l[i];
    n_y += s.c_y[i];
  }
  if (n_y == 0) throw std::runtime_error("snapshot_at: analysis before any primary outcome");
  s.p_l = static_cast<double>(n_l) / static_cast<double>(records.size());
  s.p_y = static_cast<double>(n_y) / static_cast<double>(records.size());
  s.records = std::move(records);
  return s;
}

AnalysisSnapshot snapshot_complete(std::vector<ParticipantRecord> records,
                                   const DelayConfig& cfg) {
  double last = 0.0;
  for (const auto& r : records) last = std::max(last, r.enroll_time);
  return snapshot_at(std::move(records), last + cfg.d_y, cfg);
}

std::pair<double, double> observed_fractions(const AnalysisSnapshot& s) {
  return {s.p_y, s.p_l};
}

void assign_enrollment_times(std::vector<ParticipantRecord>& records, double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("assign_enrollment_times: rate must be positive");
  for (std::size_t i = 0; i < records.size(); ++i)
    records[i].enroll_time = static_cast<double>(i + 1) / rate;
}

void write_csv(std::ostream& os, const std::vector<ParticipantRecord>& records) {
  if (records.empty()) throw std::invalid_argument("write_csv: no records");
  const std::size_t k = records[0].w.size();
  os << "id,enroll_time";
  for (std::size_t j = 0; j < k; ++j) os << ",w" << (j + 1);
  os << ",a,l,y\n";
  os.precision(17);
  for (const auto& r : records) {
    if (r.w.size() != k) throw std::invalid_argument("write_csv: ragged covariate rows");
    os << r.id << ',' << r.enroll_time;
    for (double v : r.w) os << ',' << v;
    os << ',' << r.a << ',' << r.l << ',' << r.y << '\n';
  }
}

void write_csv_file(const std::string& path, const std::vector<ParticipantRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv_file: cannot open " + path);
  write_csv(os, records);
  if (!os) throw std::runtime_error("write_csv_file: write failed for " + path);
}

std::vector<ParticipantRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  // Header determines the covariate dimension.
  std::size_t n_fields = 1;
  for (char c : line) n_fields += (c == ',');
  if (n_fields < 6) throw std::runtime_error("read_csv: bad header");
  const std::size_t k = n_fields - 5;

  std::vector<ParticipantRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ParticipantRecord r;
    auto next = [&]() -> double {
      if (!std::getline(ss, tok, ','))
        throw std::runtime_error("read_csv: short row at line " + std::to_string(line_no));
      return std::stod(tok);
    };
    r.id = static_cast<std::int64_t>(next());
    r.enroll_time = next();
    r.w.resize(k);
    for (std::size_t j = 0; j < k; ++j) r.w[j] = next();
    r.a = static_cast<int>(next());
    r.l = static_cast<int>(next());
    r.y = static_cast<int>(next());
    if ((r.a != 0 && r.a != 1) || (r.l != 0 && r.l != 1) || (r.y != 0 && r.y != 1))
      throw std::runtime_error("read_csv: a,l,y must be binary at line " + std::to_string(line_no));
    out.push_back(std::move(r));
  }
  if (out.empty()) throw std::runtime_error("read_csv: no data rows");
  return out;
}

std::vector<ParticipantRecord> read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv_file: cannot open " + path);
  return read_csv(is);
}

}  // namespace gst
