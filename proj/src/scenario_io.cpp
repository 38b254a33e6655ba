#include "cesopt/scenario_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace cesopt {

using nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    if (v == 0.0) v = 0.0; // normalize -0
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

ordered_json parse_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    try {
        return ordered_json::parse(in);
    } catch (const std::exception& e) {
        throw LoadError(path.string() + ": " + e.what());
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (line_no == 1) {
            table.header = cells;
        } else {
            if (cells.size() != table.header.size()) {
                throw LoadError(path.string() + ": row " + std::to_string(line_no) + " has " +
                                std::to_string(cells.size()) + " cells, expected " +
                                std::to_string(table.header.size()));
            }
            table.rows.push_back(std::move(cells));
        }
    }
    if (table.header.empty()) throw LoadError(path.string() + ": empty file");
    return table;
}

double parse_double(const std::string& s, const fs::path& path, int row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw LoadError(path.string() + ": row " + std::to_string(row) + ": bad number '" + s +
                        "'");
    }
}

// wide series file: column per user id, H rows
MatrixXd read_series(const fs::path& path, const std::vector<std::string>& ids,
                     int expected_rows) {
    const CsvTable table = read_csv(path);
    if (expected_rows >= 0 && static_cast<int>(table.rows.size()) != expected_rows) {
        throw LoadError(path.string() + ": expected " + std::to_string(expected_rows) +
                        " rows, found " + std::to_string(table.rows.size()));
    }
    std::map<std::string, int> col_of;
    for (int c = 1; c < static_cast<int>(table.header.size()); ++c) {
        col_of[table.header[c]] = c;
    }
    MatrixXd series(table.rows.size(), ids.size());
    for (std::size_t u = 0; u < ids.size(); ++u) {
        const auto it = col_of.find(ids[u]);
        if (it == col_of.end()) {
            throw LoadError(path.string() + ": missing column for user '" + ids[u] + "'");
        }
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            series(r, u) = parse_double(table.rows[r][it->second], path, static_cast<int>(r) + 2);
        }
    }
    return series;
}

double require_number(const ordered_json& obj, const char* key, const fs::path& path) {
    if (!obj.contains(key) || !obj[key].is_number()) {
        throw LoadError(path.string() + ": missing numeric field '" + key + "'");
    }
    return obj[key].get<double>();
}

} // namespace

Scenario load_scenario(const fs::path& feeder_file, const fs::path& users_file,
                       const fs::path& demand_file, const fs::path& pv_file,
                       const fs::path& reactive_file, const fs::path& prices_file,
                       const fs::path& ces_file, const fs::path& weights_file) {
    Scenario scenario;

    // feeder
    {
        const ordered_json j = parse_json_file(feeder_file);
        FeederSpec feeder;
        feeder.v_base_v = require_number(j, "v_base_v", feeder_file);
        feeder.s_base_va = require_number(j, "s_base_va", feeder_file);
        feeder.v0_pu = require_number(j, "v0_pu", feeder_file);
        feeder.v_min_pu = require_number(j, "vmin_pu", feeder_file);
        feeder.v_max_pu = require_number(j, "vmax_pu", feeder_file);
        if (!j.contains("buses") || !j["buses"].is_array()) {
            throw LoadError(feeder_file.string() + ": missing 'buses' array");
        }
        for (const auto& b : j["buses"]) feeder.buses.push_back(b.get<int>());
        if (!j.contains("lines") || !j["lines"].is_array()) {
            throw LoadError(feeder_file.string() + ": missing 'lines' array");
        }
        for (const auto& lj : j["lines"]) {
            LineSpec line;
            line.from = static_cast<int>(require_number(lj, "from", feeder_file));
            line.to = static_cast<int>(require_number(lj, "to", feeder_file));
            line.r_ohm = require_number(lj, "r_ohm", feeder_file);
            line.x_ohm = require_number(lj, "x_ohm", feeder_file);
            if (lj.contains("imax_a")) line.i_max_a = lj["imax_a"].get<double>();
            feeder.lines.push_back(line);
        }
        try {
            feeder.validate();
        } catch (const Error& e) {
            throw LoadError(feeder_file.string() + ": " + e.what());
        }
        scenario.feeder = feeder;
    }

    // users
    std::vector<std::string> ids;
    {
        const CsvTable table = read_csv(users_file);
        if (table.header.size() < 3 || table.header[0] != "user_id") {
            throw LoadError(users_file.string() + ": expected header user_id,bus,kind");
        }
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            UserProfile user;
            user.id = table.rows[r][0];
            user.bus = static_cast<int>(parse_double(table.rows[r][1], users_file,
                                                     static_cast<int>(r) + 2));
            const std::string& kind = table.rows[r][2];
            if (kind == "participant") {
                user.kind = UserKind::participant;
            } else if (kind == "nonparticipant") {
                user.kind = UserKind::non_participant;
            } else {
                throw LoadError(users_file.string() + ": row " + std::to_string(r + 2) +
                                ": unknown kind '" + kind + "'");
            }
            ids.push_back(user.id);
            scenario.users.push_back(std::move(user));
        }
        if (scenario.users.empty()) throw LoadError(users_file.string() + ": no users");
    }

    // profiles: H comes from the demand file, dt = 24/H
    const MatrixXd demand = read_series(demand_file, ids, -1);
    const int horizon = static_cast<int>(demand.rows());
    if (horizon < 1) throw LoadError(demand_file.string() + ": no data rows");
    scenario.grid = TimeGrid::day(horizon);
    const MatrixXd pv = read_series(pv_file, ids, horizon);
    MatrixXd reactive;
    const bool has_reactive = !reactive_file.empty() && fs::exists(reactive_file);
    if (has_reactive) reactive = read_series(reactive_file, ids, horizon);

    for (std::size_t u = 0; u < scenario.users.size(); ++u) {
        auto& user = scenario.users[u];
        user.demand_kwh = demand.col(u);
        if (!user.is_participant() && pv.col(u).cwiseAbs().maxCoeff() > 0.0) {
            throw LoadError(pv_file.string() + ": non-participant '" + user.id +
                            "' has nonzero pv");
        }
        user.pv_kwh = user.is_participant() ? VectorXd(pv.col(u)) : VectorXd::Zero(horizon).eval();
        if (has_reactive) user.reactive_kvarh = reactive.col(u);
    }

    // prices
    {
        const CsvTable table = read_csv(prices_file);
        if (static_cast<int>(table.rows.size()) != horizon) {
            throw LoadError(prices_file.string() + ": expected " + std::to_string(horizon) +
                            " rows, found " + std::to_string(table.rows.size()));
        }
        scenario.prices = VectorXd(horizon);
        for (int r = 0; r < horizon; ++r) {
            scenario.prices[r] = parse_double(table.rows[r][1], prices_file, r + 2);
        }
    }

    // ces (optional)
    if (!ces_file.empty() && fs::exists(ces_file)) {
        const ordered_json j = parse_json_file(ces_file);
        CesSpec ces;
        ces.bus = static_cast<int>(require_number(j, "bus", ces_file));
        ces.b_max_kwh = require_number(j, "b_max_kwh", ces_file);
        ces.b_min_kwh = require_number(j, "b_min_kwh", ces_file);
        ces.gamma_ch_kw = require_number(j, "gamma_ch_kw", ces_file);
        ces.gamma_dis_kw = require_number(j, "gamma_dis_kw", ces_file);
        ces.eta_c = require_number(j, "eta_c", ces_file);
        ces.eta_d = require_number(j, "eta_d", ces_file);
        ces.b0_kwh = j.contains("b0_kwh") ? j["b0_kwh"].get<double>() : ces.b_min_kwh;
        ces.theta_kwh = j.contains("theta_kwh") ? j["theta_kwh"].get<double>() : 1.0;
        try {
            ces.validate();
        } catch (const Error& e) {
            throw LoadError(ces_file.string() + ": " + e.what());
        }
        scenario.ces = ces;
    }

    // weights (optional): explicit pair or pairwise comparison matrix
    if (!weights_file.empty() && fs::exists(weights_file)) {
        const ordered_json j = parse_json_file(weights_file);
        if (j.contains("pairwise")) {
            Eigen::MatrixXd pairwise(2, 2);
            const auto& rows = j["pairwise"];
            for (int i = 0; i < 2; ++i)
                for (int k = 0; k < 2; ++k) pairwise(i, k) = rows[i][k].get<double>();
            scenario.weights = ahp_weights(pairwise);
        } else {
            scenario.weights = {require_number(j, "w1", weights_file),
                                require_number(j, "w2", weights_file)};
        }
    } else {
        Eigen::MatrixXd ratio2(2, 2);
        ratio2 << 1.0, 2.0, 0.5, 1.0;
        scenario.weights = ahp_weights(ratio2);
    }

    try {
        scenario.validate();
    } catch (const Error& e) {
        throw LoadError(std::string("scenario validation: ") + e.what());
    }
    return scenario;
}

Scenario load_scenario(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("scenario directory not found: " + dir.string());
    const fs::path reactive = dir / "reactive.csv";
    const fs::path ces = dir / "ces.json";
    const fs::path weights = dir / "weights.json";
    return load_scenario(dir / "feeder.json", dir / "users.csv", dir / "demand.csv",
                         dir / "pv.csv", fs::exists(reactive) ? reactive : fs::path(),
                         dir / "prices.csv", fs::exists(ces) ? ces : fs::path(),
                         fs::exists(weights) ? weights : fs::path());
}

namespace {

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw EmitError("cannot write " + path.string());
    out << body;
    if (!out) throw EmitError("write failed for " + path.string());
}

std::string series_csv(const std::vector<std::string>& columns,
                       const std::vector<const VectorXd*>& series) {
    std::ostringstream out;
    out << "t";
    for (const auto& c : columns) out << "," << c;
    out << "\n";
    const auto rows = series.empty() ? 0 : series.front()->size();
    for (Eigen::Index t = 0; t < rows; ++t) {
        out << t;
        for (const auto* s : series) out << "," << fmt((*s)[t]);
        out << "\n";
    }
    return out.str();
}

} // namespace

void write_scenario(const Scenario& scenario, const fs::path& dir) {
    fs::create_directories(dir);
    const int horizon = scenario.grid.num_intervals;

    ordered_json feeder;
    feeder["v_base_v"] = scenario.feeder.v_base_v;
    feeder["s_base_va"] = scenario.feeder.s_base_va;
    feeder["v0_pu"] = scenario.feeder.v0_pu;
    feeder["vmin_pu"] = scenario.feeder.v_min_pu;
    feeder["vmax_pu"] = scenario.feeder.v_max_pu;
    feeder["buses"] = scenario.feeder.buses;
    feeder["lines"] = ordered_json::array();
    for (const auto& line : scenario.feeder.lines) {
        ordered_json lj;
        lj["from"] = line.from;
        lj["to"] = line.to;
        lj["r_ohm"] = line.r_ohm;
        lj["x_ohm"] = line.x_ohm;
        if (line.i_max_a) lj["imax_a"] = *line.i_max_a;
        feeder["lines"].push_back(lj);
    }
    write_file(dir / "feeder.json", feeder.dump(2) + "\n");

    {
        std::ostringstream users;
        users << "user_id,bus,kind\n";
        for (const auto& u : scenario.users) {
            users << u.id << "," << u.bus << ","
                  << (u.is_participant() ? "participant" : "nonparticipant") << "\n";
        }
        write_file(dir / "users.csv", users.str());
    }

    auto wide = [&](auto getter) {
        std::ostringstream out;
        out << "t";
        for (const auto& u : scenario.users) out << "," << u.id;
        out << "\n";
        for (int t = 0; t < horizon; ++t) {
            out << t;
            for (const auto& u : scenario.users) out << "," << fmt(getter(u, t));
            out << "\n";
        }
        return out.str();
    };
    write_file(dir / "demand.csv",
               wide([](const UserProfile& u, int t) { return u.demand_kwh[t]; }));
    write_file(dir / "pv.csv", wide([](const UserProfile& u, int t) {
                   return u.pv_kwh.size() > 0 ? u.pv_kwh[t] : 0.0;
               }));
    bool any_reactive = false;
    for (const auto& u : scenario.users) any_reactive |= u.reactive_kvarh.size() > 0;
    if (any_reactive) {
        write_file(dir / "reactive.csv", wide([](const UserProfile& u, int t) {
                       return u.reactive_kvarh.size() > 0 ? u.reactive_kvarh[t] : 0.0;
                   }));
    }

    {
        std::ostringstream prices;
        prices << "t,price_per_kwh\n";
        for (int t = 0; t < horizon; ++t) prices << t << "," << fmt(scenario.prices[t]) << "\n";
        write_file(dir / "prices.csv", prices.str());
    }

    if (scenario.ces) {
        ordered_json ces;
        ces["bus"] = scenario.ces->bus;
        ces["b_max_kwh"] = scenario.ces->b_max_kwh;
        ces["b_min_kwh"] = scenario.ces->b_min_kwh;
        ces["gamma_ch_kw"] = scenario.ces->gamma_ch_kw;
        ces["gamma_dis_kw"] = scenario.ces->gamma_dis_kw;
        ces["eta_c"] = scenario.ces->eta_c;
        ces["eta_d"] = scenario.ces->eta_d;
        ces["b0_kwh"] = scenario.ces->b0_kwh;
        ces["theta_kwh"] = scenario.ces->theta_kwh;
        write_file(dir / "ces.json", ces.dump(2) + "\n");
    }

    ordered_json weights;
    weights["w1"] = scenario.weights.w1;
    weights["w2"] = scenario.weights.w2;
    write_file(dir / "weights.json", weights.dump(2) + "\n");
}

RunArtifacts emit_artifacts(const Scenario& scenario, const SolveReport& report,
                            const Schedule& schedule, const NetworkSeries& net,
                            const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw EmitError("cannot create " + out_dir.string() + ": " + ec.message());

    RunArtifacts artifacts;
    const int horizon = scenario.grid.num_intervals;

    artifacts.schedule_csv = out_dir / "schedule.csv";
    write_file(artifacts.schedule_csv,
               series_csv({"e_p_kwh", "e_g_kwh", "e_s_kwh", "soc_kwh"},
                          {&schedule.decision.user_grid_kwh, &schedule.decision.ces_grid_kwh,
                           &schedule.ces_flow_kwh, &schedule.soc_kwh}));

    {
        std::ostringstream out;
        out << "t,user_id,l_kwh,y_kwh,e_kwh\n";
        for (int t = 0; t < horizon; ++t) {
            for (std::size_t n = 0; n < schedule.users.size(); ++n) {
                out << t << "," << schedule.user_ids[n] << ","
                    << fmt(schedule.users[n].grid_kwh[t]) << ","
                    << fmt(schedule.users[n].ces_kwh[t]) << ","
                    << fmt(schedule.users[n].net_kwh[t]) << "\n";
            }
        }
        artifacts.user_schedule_csv = out_dir / "user_schedule.csv";
        write_file(artifacts.user_schedule_csv, out.str());
    }

    {
        std::ostringstream out;
        out << "t";
        for (int i = 1; i <= scenario.feeder.num_buses(); ++i) out << ",v" << i << "_pu";
        out << "\n";
        for (int t = 0; t < horizon; ++t) {
            out << t;
            for (int i = 0; i < scenario.feeder.num_buses(); ++i) {
                out << "," << fmt(std::sqrt(std::max(net.v_sq_pu(i, t), 0.0)));
            }
            out << "\n";
        }
        artifacts.voltages_csv = out_dir / "voltages.csv";
        write_file(artifacts.voltages_csv, out.str());
    }

    {
        std::ostringstream out;
        out << "t";
        for (const auto& line : scenario.feeder.lines) {
            out << ",i" << line.from << "_" << line.to << "_pu";
        }
        out << "\n";
        for (int t = 0; t < horizon; ++t) {
            out << t;
            for (int l = 0; l < static_cast<int>(scenario.feeder.lines.size()); ++l) {
                out << "," << fmt(std::sqrt(std::max(net.i_sq_pu(l, t), 0.0)));
            }
            out << "\n";
        }
        artifacts.currents_csv = out_dir / "currents.csv";
        write_file(artifacts.currents_csv, out.str());
    }

    {
        const VectorXd e_n = scenario.nonparticipant_total_kwh();
        std::ostringstream out;
        out << "t,e_p_kwh,e_n_kwh,e_g_kwh,e_total_kwh,loss_kwh\n";
        for (int t = 0; t < horizon; ++t) {
            out << t << "," << fmt(schedule.decision.user_grid_kwh[t]) << "," << fmt(e_n[t]) << ","
                << fmt(schedule.decision.ces_grid_kwh[t]) << "," << fmt(report.grid_load_kwh[t])
                << "," << fmt(net.loss_per_step_kwh[t]) << "\n";
        }
        artifacts.gridload_csv = out_dir / "gridload.csv";
        write_file(artifacts.gridload_csv, out.str());
    }

    {
        ordered_json j;
        j["variant"] = to_string(report.variant);
        j["weights"] = {{"w1", report.weights.w1}, {"w2", report.weights.w2}};
        j["objectives"] = {{"f_cost", report.f_cost},
                           {"f_loss_kwh", report.f_loss_kwh},
                           {"revenue", report.revenue},
                           {"scalarized", report.scalarized}};
        j["bounds"] = {{"f_cost_utopia", report.bounds.cost_utopia},
                       {"f_cost_nadir", report.bounds.cost_nadir},
                       {"f_loss_utopia_kwh", report.bounds.loss_utopia_kwh},
                       {"f_loss_nadir_kwh", report.bounds.loss_nadir_kwh}};
        j["grid_load"] = {{"peak_import_kwh", report.peak_import_kwh},
                          {"peak_export_kwh", report.peak_export_kwh},
                          {"total_kwh", report.grid_load_kwh.sum()}};
        j["totals"] = {{"loss_kwh", net.total_loss_kwh}};
        ordered_json ces_violations = ordered_json::array();
        for (const auto& v : report.violations.ces) {
            const char* kind = v.kind == CesViolation::Kind::power
                                   ? "power"
                                   : (v.kind == CesViolation::Kind::capacity ? "capacity"
                                                                             : "continuity");
            ces_violations.push_back({{"kind", kind}, {"t", v.t}, {"amount", v.amount}});
        }
        ordered_json net_violations = ordered_json::array();
        for (const auto& v : report.violations.network) {
            const char* kind = v.kind == NetworkViolation::Kind::current
                                   ? "current"
                                   : (v.kind == NetworkViolation::Kind::under_voltage
                                          ? "under_voltage"
                                          : "over_voltage");
            net_violations.push_back({{"kind", kind},
                                      {"index", v.index},
                                      {"t", v.t},
                                      {"value_pu_sq", v.value_pu_sq},
                                      {"limit_pu_sq", v.limit_pu_sq}});
        }
        j["violations"] = {{"count", report.violations.total()},
                           {"ces", ces_violations},
                           {"network", net_violations}};
        j["solver"] = {{"iterations", report.diagnostics.iterations},
                       {"kkt_stationarity", report.diagnostics.kkt_stationarity},
                       {"kkt_feasibility", report.diagnostics.kkt_feasibility}};
        artifacts.report_json = out_dir / "report.json";
        write_file(artifacts.report_json, j.dump(2) + "\n");
    }
    return artifacts;
}

namespace {

// deterministic, platform-independent generator (splitmix64)
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double jittered(double amplitude, double jitter) {
        return amplitude * (1.0 + jitter * (2.0 * unit() - 1.0));
    }
};

} // namespace

SynthProfiles synth_profiles(const SynthParams& params) {
    if (params.n_users < 1) throw InvalidArgument("synth_profiles: need at least one user");
    if (params.n_participants < 0 || params.n_participants > params.n_users) {
        throw InvalidArgument("synth_profiles: participant count out of range");
    }
    SplitMix64 rng(params.seed);
    const int horizon = params.n_intervals;
    const double dt = 24.0 / horizon;

    SynthProfiles out;
    out.demand_kwh = MatrixXd::Zero(horizon, params.n_users);
    out.pv_kwh = MatrixXd::Zero(horizon, params.n_users);

    // interleave kinds so every bus carries both; stable across seeds
    const int stride = params.n_users;
    for (int u = 0; u < params.n_users; ++u) {
        char name[16];
        std::snprintf(name, sizeof(name), "u%02d", u + 1);
        out.ids.push_back(name);
        out.bus.push_back(u % params.n_buses + 1);
        const bool participant =
            static_cast<long>(u) * params.n_participants / stride !=
            static_cast<long>(u + 1) * params.n_participants / stride;
        out.kind.push_back(participant ? UserKind::participant : UserKind::non_participant);

        const double base = rng.jittered(params.base_load_kw, params.jitter);
        const double morning = rng.jittered(params.morning_peak_kw, params.jitter);
        const double evening = rng.jittered(params.evening_peak_kw, params.jitter);
        const double pv_amp = rng.jittered(params.pv_peak_kw, params.jitter);
        const double evening_center = 18.5 + (rng.unit() - 0.5);
        const double morning_center = 7.5 + (rng.unit() - 0.5);

        for (int t = 0; t < horizon; ++t) {
            const double h = (t + 0.5) * dt;
            auto bump = [h](double center, double width) {
                const double z = (h - center) / width;
                return std::exp(-z * z);
            };
            double kw = base + morning * bump(morning_center, 1.2) +
                        evening * bump(evening_center, 1.8);
            out.demand_kwh(t, u) = kw * dt;
            if (participant && h > params.daylight_start_h && h < params.daylight_end_h) {
                const double phase = (h - params.daylight_start_h) /
                                     (params.daylight_end_h - params.daylight_start_h);
                const double bell = std::sin(M_PI * phase);
                out.pv_kwh(t, u) = pv_amp * bell * bell * dt;
            }
        }
    }
    return out;
}

} // namespace cesopt
