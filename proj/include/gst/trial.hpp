#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gst {

// One enrollee's full data (W, A, L, Y) plus enrollment time. Censoring is
// derived at analysis time, never stored here.
struct ParticipantRecord {
  std::int64_t id = 0;
  double enroll_time = 0.0;  // years
  std::vector<double> w;     // baseline covariates, dimension >= 1
  int a = 0;                 // arm, 1 = treatment
  int l = 0;                 // short-term outcome
  int y = 0;                 // primary outcome
};

struct DelayConfig {
  double d_l = 30.0 / 365.25;   // years until L observed
  double d_y = 180.0 / 365.25;  // years until Y observed
  double enroll_rate = 140.0;   // participants per year

  void validate() const;
};

// The dataset as visible at one calendar time: per-record observation flags
// for L and Y plus the realized observation fractions.
struct AnalysisSnapshot {
  std::vector<ParticipantRecord> records;
  std::vector<std::uint8_t> c_l;
  std::vector<std::uint8_t> c_y;
  double analysis_time = 0.0;
  double p_l = 0.0;
  double p_y = 0.0;

  std::size_t size() const { return records.size(); }
};

// Applies administrative censoring: L observed iff t >= enroll + d_l, Y
// observed iff t >= enroll + d_y. All records must be enrolled by t. Throws
// if the record list is empty or no primary outcome is observed yet.
AnalysisSnapshot snapshot_at(std::vector<ParticipantRecord> records, double t,
                             const DelayConfig& cfg);

// Snapshot with complete follow-up for every record (decision analyses).
AnalysisSnapshot snapshot_complete(std::vector<ParticipantRecord> records,
                                   const DelayConfig& cfg);

std::pair<double, double> observed_fractions(const AnalysisSnapshot& s);  // (p_y, p_l)

// Assigns equally spaced enrollment times at `rate` per year: record i
// enrolls at (i+1)/rate.
void assign_enrollment_times(std::vector<ParticipantRecord>& records, double rate);

// CSV dataset format: header `id,enroll_time,w1,...,wk,a,l,y`.
void write_csv(std::ostream& os, const std::vector<ParticipantRecord>& records);
void write_csv_file(const std::string& path, const std::vector<ParticipantRecord>& records);
std::vector<ParticipantRecord> read_csv(std::istream& is);
std::vector<ParticipantRecord> read_csv_file(const std::string& path);

}  // namespace gst
