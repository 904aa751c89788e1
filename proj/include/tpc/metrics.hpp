#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace tpc {

// Newline-delimited JSON metrics stream with a flat CSV mirror. Both files
// serialize numbers identically (shortest round-trip), so shared fields agree
// byte-for-byte. The CSV column set is fixed at construction.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& jsonl_path, const std::string& csv_path,
                std::vector<std::string> csv_columns);

  using Fields = std::vector<std::pair<std::string, double>>;
  void write(const std::string& kind, int64_t step, const Fields& fields);
  void write_error(int64_t step, const std::string& message);
  bool error_emitted() const { return error_emitted_; }
  void flush();

 private:
  std::ofstream jsonl_, csv_;
  std::vector<std::string> columns_;
  bool error_emitted_ = false;
};

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace tpc
