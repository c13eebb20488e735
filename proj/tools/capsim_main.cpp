// capsim command line: single runs, parameter sweeps, identity verification
// and report rendering for slotted wireless capacity experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "capsim/capsim.hpp"

namespace fs = std::filesystem;
using capsim::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerdict = 1;
constexpr int kExitInvalid = 2;

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  out << content;
}

int cmd_simulate(const std::string& config_path, const std::string& y_csv,
                 const std::string& slots_csv, const std::string& placement_csv,
                 const std::string& flows_csv) {
  capsim::SimConfig cfg = capsim::parse_sim_config(capsim::load_json_file(config_path));
  if (!slots_csv.empty()) cfg.record_slot_trace = true;

  if (!placement_csv.empty()) {
    const capsim::Placement p = capsim::detail::make_placement(cfg);
    std::ofstream out(placement_csv);
    capsim::write_placement_csv(out, p);
  }
  if (!flows_csv.empty()) {
    const auto flows = cfg.flows ? *cfg.flows
                                 : capsim::gen_unicast_pairs(cfg.n, capsim::mix_seed(cfg.seed, 2));
    std::ofstream out(flows_csv);
    capsim::write_flows_csv(out, flows);
  }

  const capsim::MetricsRecord m = capsim::run(cfg);
  if (!y_csv.empty()) {
    std::ofstream out(y_csv);
    out << "t,y\n";
    for (std::size_t t = 0; t < m.y_series.size(); ++t) out << t << ',' << m.y_series[t] << '\n';
  }
  if (!slots_csv.empty()) {
    std::ofstream out(slots_csv);
    out << "t,tx,rx\n";
    for (const auto& e : m.slot_trace) out << e.t << ',' << e.tx << ',' << e.rx << '\n';
  }
  std::cout << capsim::metrics_to_json(m).dump(2) << "\n";
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, unsigned threads) {
  capsim::SweepSpec spec = capsim::parse_sweep_spec(capsim::load_json_file(config_path));
  if (threads) spec.threads = threads;
  fs::create_directories(out_dir);

  const auto rows = capsim::sweep(spec);
  {
    std::ofstream out(fs::path(out_dir) / "sweep.csv");
    capsim::write_sweep_csv(out, rows, spec);
  }
  const capsim::ScenarioReport rep = capsim::scenario_report(rows, spec);
  write_file(fs::path(out_dir) / "fit.json", capsim::fit_to_json(rep, spec).dump(2) + "\n");
  std::cout << capsim::render_report_table(rep, spec);
  return rep.fit.pass ? kExitOk : kExitVerdict;
}

int cmd_verify(const std::string& config_path) {
  const capsim::SimConfig cfg = capsim::parse_sim_config(capsim::load_json_file(config_path));
  const capsim::MetricsRecord m = capsim::run(cfg);
  try {
    const double residual = capsim::verify_identity(m);
    std::cout << "identity residual: " << residual << " (eta " << m.eta_hat << ", ey "
              << m.ey_hat << ", k " << m.k_hat << ")\n";
    return residual <= 0.05 ? kExitOk : kExitVerdict;
  } catch (const std::runtime_error& e) {
    std::cout << e.what() << "\n";
    return kExitVerdict;
  }
}

// Rebuilds aggregates and the fit from sweep.csv alone (bracket taken from
// fit.json when present), prints the table and writes scaling.dat.
int cmd_report(const std::string& in_dir) {
  const fs::path csv_path = fs::path(in_dir) / "sweep.csv";
  std::ifstream in(csv_path);
  if (!in) throw std::invalid_argument("cannot open " + csv_path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty sweep.csv");

  capsim::SweepSpec spec;
  std::vector<capsim::SweepRow> rows;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 10) throw std::invalid_argument("malformed sweep.csv row: " + line);
    if (first) {
      spec.base.scenario = capsim::scenario_from_name(fields[0]);
      if (fields[1] == "n")
        spec.param = capsim::SweepParam::N;
      else if (fields[1] == "l")
        spec.param = capsim::SweepParam::L;
      else if (fields[1] == "M")
        spec.param = capsim::SweepParam::M;
      else
        throw std::invalid_argument("bad param column: " + fields[1]);
      first = false;
    }
    capsim::SweepRow row;
    row.value = std::stoull(fields[2]);
    row.seed = std::stoull(fields[3]);
    row.metrics.scenario = spec.base.scenario;
    row.metrics.eta_hat = std::stod(fields[4]);
    row.metrics.k_hat = fields[5] == "nan" ? std::nan("") : std::stod(fields[5]);
    row.metrics.ey_hat = std::stod(fields[6]);
    row.metrics.lambda_hat = std::stod(fields[7]);
    row.metrics.stability.stable = fields[8] == "1";
    row.metrics.identity_residual = fields[9] == "nan" ? std::nan("") : std::stod(fields[9]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("sweep.csv holds no data rows");

  const fs::path fit_path = fs::path(in_dir) / "fit.json";
  if (fs::exists(fit_path)) {
    const json f = capsim::load_json_file(fit_path.string());
    if (f.contains("bracket"))
      spec.bracket = std::pair{f["bracket"][0].get<double>(), f["bracket"][1].get<double>()};
  }

  // values list only feeds validate(); rebuild it from the rows
  for (const auto& r : rows)
    if (std::find(spec.values.begin(), spec.values.end(), r.value) == spec.values.end())
      spec.values.push_back(r.value);
  spec.seeds_per_point = 1;

  const capsim::ScenarioReport rep = capsim::scenario_report(rows, spec);
  {
    std::ofstream out(fs::path(in_dir) / "scaling.dat");
    capsim::write_scaling_dat(out, rep);
  }
  std::cout << capsim::render_report_table(rep, spec);
  return rep.fit.pass ? kExitOk : kExitVerdict;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slotted wireless multi-hop capacity simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir;
  std::string y_csv, slots_csv, placement_csv, flows_csv;
  unsigned threads = 0;

  auto* sim = app.add_subcommand("simulate", "run one simulation, metrics JSON to stdout");
  sim->add_option("--config", config_path, "simulation config JSON")->required();
  sim->add_option("--y-csv", y_csv, "dump per-slot active link counts as CSV t,y");
  sim->add_option("--trace-slots", slots_csv, "dump scheduled links as CSV t,tx,rx");
  sim->add_option("--dump-placement", placement_csv, "dump node placement as CSV id,x,y");
  sim->add_option("--dump-flows", flows_csv, "dump flow list as CSV src,dsts");

  auto* sw = app.add_subcommand("sweep", "run a parameter sweep, write sweep.csv and fit.json");
  sw->add_option("--config", config_path, "sweep config JSON")->required();
  sw->add_option("--out", out_dir, "output directory")->required();
  sw->add_option("--threads", threads, "worker threads (0 = hardware)");

  auto* ver = app.add_subcommand("verify", "run once and check the capacity identity");
  ver->add_option("--config", config_path, "simulation config JSON")->required();

  auto* rep = app.add_subcommand("report", "render table and scaling.dat from a sweep directory");
  rep->add_option("--in", in_dir, "directory holding sweep.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, y_csv, slots_csv, placement_csv, flows_csv);
    if (sw->parsed()) return cmd_sweep(config_path, out_dir, threads);
    if (ver->parsed()) return cmd_verify(config_path);
    if (rep->parsed()) return cmd_report(in_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerdict;
  }
  return kExitInvalid;
}
