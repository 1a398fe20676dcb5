#include "qrn/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace qrn {

float mean_gate(const std::vector<std::vector<float>>& rows) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    for (float v : r) sum += v;
    n += r.size();
  }
  return n ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;
}

float trace_mean_update(const GateTrace& trace) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& e : trace.entries) {
    for (const auto& r : e.update) {
      for (float v : r) sum += v;
      n += r.size();
    }
  }
  return n ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;
}

float trace_mean_reset(const GateTrace& trace) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& e : trace.entries) {
    for (const auto& r : e.reset) {
      for (float v : r) sum += v;
      n += r.size();
    }
  }
  return n ? static_cast<float>(sum / static_cast<double>(n)) : 0.0f;
}

namespace {

float cell_value(const std::vector<std::vector<float>>& rows, std::size_t t) {
  if (t >= rows.size() || rows[t].empty()) return 0.0f;
  if (rows[t].size() == 1) return rows[t][0];
  double s = 0;  // vector gates render as their mean
  for (float v : rows[t]) s += v;
  return static_cast<float>(s / static_cast<double>(rows[t].size()));
}

struct Column {
  std::string label;
  const std::vector<std::vector<float>>* rows;
};

std::vector<Column> layout(const GateTrace& trace) {
  std::vector<Column> cols;
  for (const auto& e : trace.entries) {
    const std::string level = std::to_string(e.layer + 1);
    if (!e.backward)
      cols.push_back({"z" + level, &e.update});
    if (!e.reset.empty())
      cols.push_back({(e.backward ? "<r" : ">r") + level, &e.reset});
  }
  return cols;
}

}  // namespace

std::string render_trace_human(const GateTrace& trace, const std::vector<std::string>& context,
                               const std::string& question, const std::string& gold,
                               const std::string& predicted) {
  auto cols = layout(trace);
  std::size_t width = 0;
  for (const auto& s : context) width = std::max(width, s.size());
  width = std::max<std::size_t>(width, 8);

  std::ostringstream out;
  out << "  t  " << std::string(width, ' ').replace(0, 8, "sentence");
  for (const auto& c : cols) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "  %5s", c.label.c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t t = 0; t < context.size(); ++t) {
    char head[16];
    std::snprintf(head, sizeof head, "%3zu  ", t + 1);
    out << head << context[t] << std::string(width - context[t].size(), ' ');
    for (const auto& c : cols) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "  %5.2f", cell_value(*c.rows, t));
      out << buf;
    }
    out << '\n';
  }
  out << "question: " << question << '\n';
  out << "gold: " << gold << '\n';
  out << "predicted: " << predicted << '\n';
  return out.str();
}

std::string render_trace_machine(const GateTrace& trace, const std::vector<std::string>& context,
                                 const std::string& question, const std::string& gold,
                                 const std::string& predicted) {
  auto cols = layout(trace);
  std::ostringstream out;
  out << "#t\tsentence";
  for (const auto& c : cols) out << '\t' << c.label;
  out << '\n';
  for (std::size_t t = 0; t < context.size(); ++t) {
    out << (t + 1) << '\t' << context[t];
    for (const auto& c : cols) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "\t%.9g", cell_value(*c.rows, t));
      out << buf;
    }
    out << '\n';
  }
  out << "question\t" << question << '\n';
  out << "gold\t" << gold << '\n';
  out << "predicted\t" << predicted << '\n';
  return out.str();
}

}  // namespace qrn
