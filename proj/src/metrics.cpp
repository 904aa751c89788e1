#include "tpc/metrics.hpp"

#include <stdexcept>

#include "json.hpp"

namespace tpc {

std::string format_double(double v) { return nlohmann::json(v).dump(); }

MetricsWriter::MetricsWriter(const std::string& jsonl_path,
                             const std::string& csv_path,
                             std::vector<std::string> csv_columns)
    : jsonl_(jsonl_path), csv_(csv_path), columns_(std::move(csv_columns)) {
  if (!jsonl_ || !csv_) {
    throw std::runtime_error("metrics: cannot open output files");
  }
  csv_ << "step,kind";
  for (const auto& c : columns_) csv_ << "," << c;
  csv_ << "\n";
}

void MetricsWriter::write(const std::string& kind, int64_t step,
                          const Fields& fields) {
  nlohmann::json rec;
  rec["step"] = step;
  rec["kind"] = kind;
  for (const auto& [k, v] : fields) rec[k] = v;
  jsonl_ << rec.dump() << "\n";

  csv_ << step << "," << kind;
  for (const auto& c : columns_) {
    csv_ << ",";
    for (const auto& [k, v] : fields) {
      if (k == c) {
        csv_ << format_double(v);
        break;
      }
    }
  }
  csv_ << "\n";
}

void MetricsWriter::write_error(int64_t step, const std::string& message) {
  error_emitted_ = true;
  nlohmann::json rec;
  rec["step"] = step;
  rec["kind"] = "error";
  rec["message"] = message;
  jsonl_ << rec.dump() << "\n";
  csv_ << step << ",error";
  for (size_t i = 0; i < columns_.size(); ++i) csv_ << ",";
  csv_ << "\n";
}

void MetricsWriter::flush() {
  jsonl_.flush();
  csv_.flush();
}

}  // namespace tpc
