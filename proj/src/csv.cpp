#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "fdg/training_log.hpp"

namespace fdg {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

namespace {
std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
}  // namespace

void write_csv(std::ostream& os, const TrainingLog& log) {
  os << "iteration,module,batch_forwarded,batch_updated,loss,grad_norm,wall_ms\n";
  for (const auto& r : log.rows) {
    os << r.iteration << ',' << r.module_id << ',';
    if (r.batch_forwarded > 0) os << r.batch_forwarded;
    os << ',';
    if (r.batch_updated > 0) os << r.batch_updated;
    else os << "warmup";
    os << ',' << num(r.loss) << ',' << num(r.grad_norm) << ',' << num(r.wall_ms) << '\n';
  }
}

std::optional<std::string> first_divergence(const TrainingLog& a, const TrainingLog& b) {
  auto bits_differ = [](double x, double y) {
    if (std::isnan(x) && std::isnan(y)) return false;
    return std::memcmp(&x, &y, sizeof(double)) != 0;
  };
  if (a.rows.size() != b.rows.size())
    return "row count " + std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& ra = a.rows[i];
    const auto& rb = b.rows[i];
    const std::string where =
        "row " + std::to_string(i) + " (iteration " + std::to_string(ra.iteration) + ", module " +
        std::to_string(ra.module_id) + ")";
    if (ra.iteration != rb.iteration || ra.module_id != rb.module_id) return where + ": position";
    if (ra.batch_forwarded != rb.batch_forwarded) return where + ": batch_forwarded";
    if (ra.batch_updated != rb.batch_updated) return where + ": batch_updated";
    if (bits_differ(ra.loss, rb.loss)) return where + ": loss";
    if (bits_differ(ra.grad_norm, rb.grad_norm)) return where + ": grad_norm";
  }
  return std::nullopt;
}

}  // namespace fdg
