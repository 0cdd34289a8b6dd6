// Shared error types, time helpers, seeding, and the key=value config reader.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vbid {

// Data / input errors (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : DataError { using DataError::DataError; };
struct MissingCell : DataError { using DataError::DataError; };
struct NoReferenceNode : DataError { using DataError::DataError; };
struct ShapeMismatch : DataError { using DataError::DataError; };
struct InvalidConfig : DataError { using DataError::DataError; };
struct FeatureMismatch : DataError { using DataError::DataError; };
struct InsufficientHistory : DataError { using DataError::DataError; };

// Numerical / domain errors (CLI exit code 3).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonPositiveTheta : NumericError { using NumericError::NumericError; };
struct OutOfRange : NumericError { using NumericError::NumericError; };
struct NonFiniteLoss : NumericError { using NumericError::NumericError; };
struct EmptyDataset : NumericError { using NumericError::NumericError; };
struct EmptyDomain : NumericError { using NumericError::NumericError; };
struct OutOfDomain : NumericError { using NumericError::NumericError; };
struct EmptyLosses : NumericError { using NumericError::NumericError; };
struct InvalidPwl : NumericError { using NumericError::NumericError; };
struct InfeasibleBounds : NumericError { using NumericError::NumericError; };
struct TooManyBinaries : NumericError { using NumericError::NumericError; };
struct TooFewPoints : NumericError { using NumericError::NumericError; };
struct ZeroVariance : NumericError { using NumericError::NumericError; };

using HourStamp = std::int64_t;  // unix seconds, aligned to a whole hour

// "YYYY-MM-DDTHH:00:00Z" -> unix seconds. Throws ParseError.
HourStamp parse_hour_utc(const std::string& s);
std::string format_hour_utc(HourStamp t);

// (year, month) of a UTC timestamp; used for calendar-month retrain cadence.
std::pair<int, int> utc_year_month(HourStamp t);
int utc_year(HourStamp t);

constexpr HourStamp kHourSec = 3600;
constexpr HourStamp kDaySec = 86400;

// FNV-1a, used for input digests and child-seed derivation.
std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_str(const std::string& s);

// All randomness flows from one root seed; submodules get children by
// hashing (seed, module name).
std::uint64_t child_seed(std::uint64_t seed, const std::string& module);

// Line-based `key = value` config file. '#' starts a comment.
class Config {
 public:
  Config() = default;
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  const std::map<std::string, std::string>& items() const { return kv_; }
  std::string canonical_text() const;  // sorted key=value lines, for hashing

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace vbid
