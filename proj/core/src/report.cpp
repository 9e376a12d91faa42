#include "metagnn/report.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace metagnn {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const ModelEvaluation> rows) {
  out << "model,task,iterations,accuracy,macro_f1\n";
  for (const auto& r : rows) {
    out << r.model << ',' << to_string(r.task) << ',' << r.iterations << ','
        << fixed(r.mean.accuracy) << ',' << fixed(r.mean.macro_f1) << '\n';
  }
}

nlohmann::json report_json(std::span<const ModelEvaluation> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json patients = nlohmann::json::array();
    for (const auto& p : r.patients) {
      patients.push_back({{"patient_id", p.patient_id},
                          {"accuracy", p.metrics.accuracy},
                          {"macro_f1", p.metrics.macro_f1}});
    }
    out.push_back({{"model", r.model},
                   {"task", std::string(to_string(r.task))},
                   {"iterations", r.iterations},
                   {"accuracy", r.mean.accuracy},
                   {"macro_f1", r.mean.macro_f1},
                   {"patients", std::move(patients)}});
  }
  return out;
}

void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace) {
  out << "iteration,support_loss,accuracy,macro_f1\n";
  for (const auto& t : trace) {
    out << t.iteration << ',' << fixed(t.support_loss) << ','
        << fixed(t.query.accuracy) << ',' << fixed(t.query.macro_f1) << '\n';
  }
}

void write_report_dir(const std::filesystem::path& dir,
                      std::span<const ModelEvaluation> rows) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "report.csv");
    write_report_csv(out, rows);
  }
  {
    auto out = open_out(dir / "report.json");
    out << report_json(rows).dump(2) << '\n';
  }
  for (const auto& r : rows) {
    if (r.iterations == 0) continue;
    const auto sub = dir / "curves" / (r.model + "-" + std::string(to_string(r.task)));
    std::filesystem::create_directories(sub);
    for (const auto& p : r.patients) {
      auto out = open_out(sub / (p.patient_id + ".csv"));
      write_trace_csv(out, p.trace);
    }
  }
}

}  // namespace metagnn
