#include "lrd/train/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace lrd {

const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys{
      "L_high_cls",  "L_high_reg",  "L_high_ctr",  "L_high",  "L_low_cls", "L_low_reg",
      "L_low_ctr",   "L_low",       "L_Align",     "L_fused_cls", "L_fused_reg", "L_fused_ctr",
      "L_fused",     "L_F",         "L_T",         "L_KD",    "L_S"};
  return keys;
}

void LossReport::set(const std::string& key, double value) {
  const auto& keys = report_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw std::invalid_argument("unknown loss report key '" + key + "'");
  }
  values_[key] = value;
}

double LossReport::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("loss report has no '" + key + "'");
  return it->second;
}

void LossReport::check_finite() const {
  for (const auto& key : report_keys()) {
    auto it = values_.find(key);
    if (it != values_.end() && !std::isfinite(it->second)) {
      throw NumericalError(key, "non-finite loss term " + key + " = " + std::to_string(it->second));
    }
  }
}

std::vector<std::string> audit_report(const std::map<std::string, double>& v, const LossWeights& w) {
  std::vector<std::string> out;
  auto has = [&](const char* k) { return v.count(k) != 0; };
  auto check = [&](const std::string& name, double lhs, double rhs) {
    if (!(std::abs(lhs - rhs) <= kAuditTolerance * std::max(1.0, std::abs(lhs)))) {
      std::ostringstream os;
      os.precision(17);
      os << name << ": " << lhs << " != " << rhs;
      out.push_back(os.str());
    }
  };
  for (std::string x : {"L_high", "L_low", "L_fused"}) {
    if (v.count(x) && v.count(x + "_cls") && v.count(x + "_reg") && v.count(x + "_ctr")) {
      check(x + " = cls + reg + ctr", v.at(x), v.at(x + "_cls") + v.at(x + "_reg") + v.at(x + "_ctr"));
    }
  }
  if (has("L_Align") && has("L_high") && has("L_low")) {
    check("L_Align = L_high + L_low", v.at("L_Align"), v.at("L_high") + v.at("L_low"));
  }
  if (has("L_F") && has("L_fused")) check("L_F = lambda * L_fused", v.at("L_F"), w.lambda * v.at("L_fused"));
  if (has("L_T")) {
    double base = 0.0;
    if (has("L_Align")) {
      base = v.at("L_Align");
    } else if (has("L_high")) {
      base = v.at("L_high");
    }
    check("L_T = L_Align + L_F", v.at("L_T"), base + (has("L_F") ? v.at("L_F") : 0.0));
  }
  if (has("L_S") && has("L_low")) {
    if (has("L_KD")) {
      check("L_S = gamma * L_KD + (1 - gamma) * L_low", v.at("L_S"),
            w.gamma * v.at("L_KD") + (1.0 - w.gamma) * v.at("L_low"));
    } else {
      check("L_S = L_low", v.at("L_S"), v.at("L_low"));
    }
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string metrics_header(const std::vector<int>& gate_levels) {
  std::string h = "phase,step,epoch,lr";
  for (const auto& k : report_keys()) h += "," + k;
  for (int s : gate_levels) h += ",gate_high_" + std::to_string(s) + ",gate_low_" + std::to_string(s);
  return h;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::vector<int> gate_levels)
    : os_(path), gate_levels_(std::move(gate_levels)) {
  if (!os_) throw std::runtime_error("cannot write " + path.string());
  os_ << metrics_header(gate_levels_) << '\n';
}

void MetricsWriter::write(const MetricsRow& row) {
  std::string line = row.phase + "," + std::to_string(row.step) + "," + std::to_string(row.epoch) + "," +
                     format_number(row.lr);
  for (const auto& k : report_keys()) {
    line += ",";
    if (row.report.has(k)) line += format_number(row.report.at(k));
  }
  for (int s : gate_levels_) {
    auto it = row.report.gates.find(s);
    if (it == row.report.gates.end()) {
      line += ",,";
    } else {
      line += "," + format_number(it->second.first) + "," + format_number(it->second.second);
    }
  }
  os_ << line << '\n';
  os_.flush();
  if (!os_) throw std::runtime_error("metrics write failed");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  MetricsTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty metrics file");
  t.columns = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) {
      throw std::runtime_error(path.string() + ": row with " + std::to_string(cells.size()) + " cells, header has " +
                               std::to_string(t.columns.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

std::optional<double> MetricsTable::value(std::size_t row, const std::string& column) const {
  auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::out_of_range("no metrics column '" + column + "'");
  const std::string& cell = rows.at(row)[static_cast<std::size_t>(it - columns.begin())];
  if (cell.empty()) return std::nullopt;
  double v = 0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw std::runtime_error("bad number '" + cell + "' in column " + column);
  }
  return v;
}

}  // namespace lrd
