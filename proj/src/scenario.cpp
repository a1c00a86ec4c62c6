#include "sgmlab/scenario.hpp"

#include "sgmlab/csv.hpp"
#include "sgmlab/girsanov.hpp"
#include "sgmlab/prior.hpp"
#include "sgmlab/rng.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#ifndef SGMLAB_SCENARIO_DIR
#define SGMLAB_SCENARIO_DIR "scenarios"
#endif

namespace sgm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Runs parse() and reports any failure against the JSON path `field`.
template <class F>
auto at_field(const std::string& field, F&& parse) -> decltype(parse()) {
    try {
        return parse();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(field, e.what());
    }
}

template <class T = std::size_t>
T unsigned_value(const json& j) {
    if (!j.is_number_unsigned()) throw std::invalid_argument("expected a nonnegative integer");
    return j.get<T>();
}

std::vector<double> times_from_json(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("expected an array of times");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(v.get<double>());
    return out;
}

GridSpec grid_from_json(const json& j) {
    GridSpec g;
    g.min = j.at("min").get<std::vector<double>>();
    g.max = j.at("max").get<std::vector<double>>();
    g.count = j.at("count").get<std::vector<std::size_t>>();
    g.validate();
    return g;
}

json grid_to_json(const GridSpec& g) { return {{"min", g.min}, {"max", g.max}, {"count", g.count}}; }

const char* prior_name(PriorKind k) {
    switch (k) {
        case PriorKind::Pushforward: return "pushforward";
        case PriorKind::Optimal: return "optimal";
        case PriorKind::OptimalIsotropic: return "optimal_isotropic";
        case PriorKind::Explicit: return "explicit";
    }
    return "?";
}

OutputRequest outputs_from_json(const json& j) {
    OutputRequest o;
    if (!j.is_object()) throw ConfigError("outputs", "must be an object");
    static const std::set<std::string> known = {"forward_ensemble", "reverse_ensemble", "ensemble_csv_paths", "forward_times",
                                                "kde", "final_density", "nearest_distance", "novikov", "girsanov",
                                                "drift_distance", "losses", "prior_table", "slope"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("outputs." + key, "unknown output");
    o.forward_ensemble = at_field("outputs.forward_ensemble", [&] { return j.value("forward_ensemble", false); });
    o.reverse_ensemble = at_field("outputs.reverse_ensemble", [&] { return j.value("reverse_ensemble", false); });
    o.ensemble_csv_paths = at_field("outputs.ensemble_csv_paths", [&] { return j.contains("ensemble_csv_paths") ? unsigned_value(j["ensemble_csv_paths"]) : std::size_t{100}; });
    if (j.contains("forward_times"))
        o.forward_times = at_field("outputs.forward_times", [&] { return times_from_json(j["forward_times"]); });
    if (j.contains("kde")) {
        const auto& k = j["kde"];
        KdeRequest r;
        r.beta = at_field("outputs.kde.beta", [&] {
            const double b = k.value("beta", kDefaultKdeBeta);
            if (!(b > 0.0)) throw std::invalid_argument("must be positive");
            return b;
        });
        r.grid = at_field("outputs.kde.grid", [&] { return grid_from_json(k.at("grid")); });
        if (r.grid.dim() > 2) throw ConfigError("outputs.kde.grid", "only 1D and 2D grids are supported");
        r.times = at_field("outputs.kde.times", [&] { return times_from_json(k.at("times")); });
        r.forward = at_field("outputs.kde.forward", [&] { return k.value("forward", false); });
        r.reverse = at_field("outputs.kde.reverse", [&] { return k.value("reverse", true); });
        r.sqrt_contrast = at_field("outputs.kde.sqrt_contrast", [&] { return k.value("sqrt_contrast", true); });
        o.kde = r;
    }
    if (j.contains("final_density")) {
        const auto& f = j["final_density"];
        FinalDensityRequest r;
        r.grid = at_field("outputs.final_density.grid", [&] { return grid_from_json(f.at("grid")); });
        if (r.grid.dim() != 1) throw ConfigError("outputs.final_density.grid", "must be 1D");
        r.beta = at_field("outputs.final_density.beta", [&] { return f.value("beta", kDefaultKdeBeta); });
        o.final_density = r;
    }
    o.nearest_distance = at_field("outputs.nearest_distance", [&] { return j.value("nearest_distance", false); });
    if (j.contains("novikov"))
        o.novikov_times = at_field("outputs.novikov", [&] { return times_from_json(j["novikov"].at("times")); });
    if (j.contains("girsanov"))
        o.girsanov_times = at_field("outputs.girsanov", [&] { return times_from_json(j["girsanov"].at("times")); });
    if (j.contains("drift_distance"))
        o.drift_distance_times = at_field("outputs.drift_distance", [&] { return times_from_json(j["drift_distance"].at("times")); });
    o.losses = at_field("outputs.losses", [&] { return j.value("losses", false); });
    if (j.contains("prior_table"))
        o.prior_table_T = at_field("outputs.prior_table", [&] { return times_from_json(j["prior_table"].at("T")); });
    if (j.contains("slope")) {
        const auto& s = j["slope"];
        SlopeRequest r;
        r.times = at_field("outputs.slope.times", [&] { return times_from_json(s.at("times")); });
        r.n = at_field("outputs.slope.n", [&] { return s.contains("n") ? unsigned_value(s["n"]) : std::size_t{10000}; });
        o.slope = r;
    }
    return o;
}

json outputs_to_json(const OutputRequest& o) {
    json j = json::object();
    j["forward_ensemble"] = o.forward_ensemble;
    j["reverse_ensemble"] = o.reverse_ensemble;
    j["ensemble_csv_paths"] = o.ensemble_csv_paths;
    if (!o.forward_times.empty()) j["forward_times"] = o.forward_times;
    if (o.kde)
        j["kde"] = {{"beta", o.kde->beta}, {"grid", grid_to_json(o.kde->grid)}, {"times", o.kde->times},
                    {"forward", o.kde->forward}, {"reverse", o.kde->reverse}, {"sqrt_contrast", o.kde->sqrt_contrast}};
    if (o.final_density) j["final_density"] = {{"grid", grid_to_json(o.final_density->grid)}, {"beta", o.final_density->beta}};
    j["nearest_distance"] = o.nearest_distance;
    if (o.novikov_times) j["novikov"] = {{"times", *o.novikov_times}};
    if (o.girsanov_times) j["girsanov"] = {{"times", *o.girsanov_times}};
    if (o.drift_distance_times) j["drift_distance"] = {{"times", *o.drift_distance_times}};
    j["losses"] = o.losses;
    if (o.prior_table_T) j["prior_table"] = {{"T", *o.prior_table_T}};
    if (o.slope) j["slope"] = {{"times", o.slope->times}, {"n", o.slope->n}};
    return j;
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "scenario must be a JSON object");
    static const std::set<std::string> known = {"name", "sde", "data", "prior", "perturbation", "audit", "schedule",
                                                "n_paths", "n_paths_full", "seed", "outputs", "description"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError(key, "unknown field");

    ScenarioConfig c;
    c.name = at_field("name", [&] { return j.at("name").get<std::string>(); });
    c.description = at_field("description", [&] { return j.value("description", std::string()); });
    c.data = at_field("data", [&] { return measure_from_json(j.at("data")); });
    c.sde = at_field("sde", [&] { return sde_from_json(j.at("sde"), measure_dim(c.data)); });
    at_field("sde.dim", [&] {
        const auto d = measure_dim(c.data);
        if (d != c.sde.data_dim && d != c.sde.state_dim())
            throw std::invalid_argument("data dimension does not match the SDE");
        return 0;
    });
    c.prior = at_field("prior", [&] {
        PriorConfig p;
        const auto& v = j.value("prior", json("pushforward"));
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "pushforward") p.kind = PriorKind::Pushforward;
            else if (s == "optimal") p.kind = PriorKind::Optimal;
            else if (s == "optimal_isotropic") p.kind = PriorKind::OptimalIsotropic;
            else throw std::invalid_argument("unknown prior '" + s + "'");
        } else {
            p.kind = PriorKind::Explicit;
            p.measure = measure_from_json(v);
            if (measure_dim(*p.measure) != c.sde.state_dim())
                throw std::invalid_argument("explicit prior must live in the SDE state dimension");
        }
        if ((p.kind == PriorKind::Optimal || p.kind == PriorKind::OptimalIsotropic) && c.sde.kind != SdeKind::Brownian)
            throw std::invalid_argument("optimal priors are defined for the Brownian SDE only");
        return p;
    });
    if (j.contains("perturbation"))
        c.perturbation = at_field("perturbation", [&] { return perturbation_from_json(j["perturbation"]); });
    if (j.contains("audit")) c.audit = at_field("audit", [&] { return perturbation_from_json(j["audit"]); });
    at_field("perturbation", [&] { return DriftField(c.sde, c.data, c.perturbation).perturbation().kind; });
    if (c.audit) at_field("audit", [&] { return DriftField(c.sde, c.data, *c.audit).perturbation().kind; });
    c.schedule = at_field("schedule", [&] { return schedule_from_json(j.at("schedule"), c.sde.terminal_time); });
    if (j["schedule"].is_string()) c.schedule_name = j["schedule"].get<std::string>();
    at_field("schedule", [&] {
        if (std::abs(c.schedule.total_time() - c.sde.terminal_time) > 1e-12 * std::max(1.0, c.sde.terminal_time))
            throw std::invalid_argument("schedule must end at the SDE terminal time");
        return 0;
    });
    c.n_paths = at_field("n_paths", [&] {
        const auto n = unsigned_value(j.at("n_paths"));
        if (n == 0) throw std::invalid_argument("must be positive");
        return n;
    });
    if (j.contains("n_paths_full")) c.n_paths_full = at_field("n_paths_full", [&] { return unsigned_value(j["n_paths_full"]); });
    c.seed = at_field("seed", [&] { return unsigned_value<std::uint64_t>(j.at("seed")); });
    c.outputs = outputs_from_json(j.value("outputs", json::object()));

    const auto& o = c.outputs;
    if ((o.novikov_times || o.girsanov_times || o.drift_distance_times) && !c.audit)
        throw ConfigError("audit", "required by the novikov, girsanov and drift_distance outputs");
    if ((o.nearest_distance || o.slope) && !std::holds_alternative<PointCloudMeasure>(c.data))
        throw ConfigError("data", "nearest_distance and slope outputs need a point-cloud data measure");
    if (o.final_density && (c.sde.kind == SdeKind::CLD || c.sde.data_dim != 1))
        throw ConfigError("outputs.final_density", "needs 1D data under the Brownian or OU SDE");
    if (o.prior_table_T && c.sde.kind != SdeKind::Brownian)
        throw ConfigError("outputs.prior_table", "defined for the Brownian SDE only");
    if (o.slope && c.sde.kind != SdeKind::Brownian) throw ConfigError("outputs.slope", "defined for the Brownian SDE only");

    auto on_grid = [&](const std::string& field, const std::vector<double>& times) {
        at_field(field, [&] {
            for (double t : times) c.schedule.index_of(t);
            return 0;
        });
    };
    on_grid("outputs.forward_times", o.forward_times);
    if (o.kde) on_grid("outputs.kde.times", o.kde->times);
    if (o.novikov_times) on_grid("outputs.novikov", *o.novikov_times);
    if (o.girsanov_times) on_grid("outputs.girsanov", *o.girsanov_times);
    if (o.drift_distance_times) on_grid("outputs.drift_distance", *o.drift_distance_times);
    return c;
}

json scenario_to_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    if (!c.description.empty()) j["description"] = c.description;
    j["sde"] = sde_to_json(c.sde);
    j["data"] = measure_to_json(c.data);
    if (c.prior.kind == PriorKind::Explicit) j["prior"] = measure_to_json(*c.prior.measure);
    else j["prior"] = prior_name(c.prior.kind);
    j["perturbation"] = perturbation_to_json(c.perturbation);
    if (c.audit) j["audit"] = perturbation_to_json(*c.audit);
    j["schedule"] = c.schedule_name.empty() ? schedule_to_json(c.schedule) : json(c.schedule_name);
    j["n_paths"] = c.n_paths;
    if (c.n_paths_full) j["n_paths_full"] = *c.n_paths_full;
    j["seed"] = c.seed;
    j["outputs"] = outputs_to_json(c.outputs);
    return j;
}

ScenarioConfig load_scenario(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

fs::path preset_directory() {
    if (const char* env = std::getenv("SGMLAB_SCENARIOS"); env && *env) return env;
    return SGMLAB_SCENARIO_DIR;
}

std::vector<std::string> list_presets() {
    std::vector<std::string> names;
    const auto dir = preset_directory();
    if (!fs::is_directory(dir)) return names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
}

fs::path preset_path(const std::string& name) {
    auto path = preset_directory() / (name + ".json");
    if (!fs::exists(path)) throw ConfigError("<preset>", "unknown preset '" + name + "'");
    return path;
}

namespace {

std::string time_tag(double t) { return "t" + format_double(t); }

std::vector<double> merged_times(std::initializer_list<const std::vector<double>*> lists) {
    std::vector<double> all;
    for (const auto* l : lists)
        if (l) all.insert(all.end(), l->begin(), l->end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }), all.end());
    return all;
}

// Leading coordinates, so CLD states project onto positions.
PointSet leading_coordinates(const PointSet& states, std::size_t dim) {
    if (states.dim() == dim) return states;
    PointSet out(states.size(), dim);
    for (std::size_t i = 0; i < states.size(); ++i) std::copy_n(states.row(i), dim, out.row(i));
    return out;
}

Measure resolve_prior(const ScenarioConfig& c) {
    switch (c.prior.kind) {
        case PriorKind::Pushforward: return pushforward(c.sde, c.data, c.sde.terminal_time);
        case PriorKind::Optimal: return optimal_gaussian_prior(c.data, c.sde.terminal_time, false).as_measure();
        case PriorKind::OptimalIsotropic: return optimal_gaussian_prior(c.data, c.sde.terminal_time, true).as_measure();
        case PriorKind::Explicit: return *c.prior.measure;
    }
    throw std::logic_error("unknown prior kind");
}

class Pipeline {
public:
    Pipeline(const ScenarioConfig& c, fs::path dir, std::size_t n) : c_(c), dir_(std::move(dir)), n_(n) {}

    json run() {
        const auto& o = c_.outputs;
        if (o.forward_ensemble || (o.kde && o.kde->forward) || o.losses) forward();
        if (o.reverse_ensemble || (o.kde && o.kde->reverse) || o.final_density || o.nearest_distance || o.novikov_times ||
            o.girsanov_times || o.drift_distance_times)
            reverse();
        if (o.prior_table_T) prior_table();
        if (o.slope) slope();
        return summary_;
    }

    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path file(const std::string& name) {
        files_.push_back(name);
        return dir_ / name;
    }

    void write_kdes(const PathEnsemble& e, const std::string& prefix) {
        const auto& k = *c_.outputs.kde;
        for (double t : k.times) {
            const auto states = leading_coordinates(e.states[e.record_index(t)], k.grid.dim());
            const auto field = kde_grid(states, k.beta, k.grid);
            write_density_csv(field, file(prefix + time_tag(t) + ".csv"), k.sqrt_contrast);
        }
    }

    void forward() {
        const auto& o = c_.outputs;
        const std::vector<double>* kde_times = (o.kde && o.kde->forward) ? &o.kde->times : nullptr;
        const std::vector<double> end{0.0, c_.sde.terminal_time};
        const auto times = merged_times({&o.forward_times, kde_times, &end});
        const auto e = simulate_forward(c_.sde, c_.data, c_.schedule, n_, c_.seed, times);
        if (o.forward_ensemble) write_ensemble_csv(e, file("forward_ensemble.csv"), o.ensemble_csv_paths);
        if (kde_times) write_kdes(e, "kde_forward_");
        if (o.losses) {
            const auto losses = path_losses(e, c_.sde, c_.data, c_.perturbation, "uniform");
            write_losses_csv(losses, file("losses.csv"));
            summary_["losses"] = {{"L2", losses.l2}, {"L_exp", losses.l_exp.estimate}, {"L_exp_log_scale", losses.l_exp.log_scale}};
        }
    }

    void reverse() {
        const auto& o = c_.outputs;
        const std::vector<double>* kde_times = (o.kde && o.kde->reverse) ? &o.kde->times : nullptr;
        const std::vector<double> end{0.0, c_.sde.terminal_time};
        const auto times = merged_times({kde_times, o.novikov_times ? &*o.novikov_times : nullptr,
                                         o.girsanov_times ? &*o.girsanov_times : nullptr,
                                         o.drift_distance_times ? &*o.drift_distance_times : nullptr, &end});
        ReverseOptions opts;
        if (o.novikov_times || o.girsanov_times) opts.audit = c_.audit;
        const auto prior = resolve_prior(c_);
        const auto e = simulate_reverse(c_.sde, c_.data, c_.perturbation, prior, c_.schedule, n_, c_.seed, times, opts);
        const auto& final_states = e.states[e.record_index(c_.sde.terminal_time)];
        const auto final_positions = leading_coordinates(final_states, c_.sde.data_dim);

        if (o.reverse_ensemble) write_ensemble_csv(e, file("reverse_ensemble.csv"), o.ensemble_csv_paths);
        if (kde_times) write_kdes(e, "kde_reverse_");
        if (o.final_density) {
            const auto& f = *o.final_density;
            const auto sample = kde_grid(final_positions, f.beta, f.grid, true);
            const auto reference = mixture_density_grid(pushforward(c_.sde, c_.data, c_.schedule.last_step()), f.grid);
            CsvWriter csv(file("final_density.csv"), {"x", "sample", "reference"});
            for (std::size_t i = 0; i < sample.values.size(); ++i)
                csv.cell(f.grid.node(0, i)).cell(sample.values[i]).cell(reference.values[i]).end_row();
        }
        if (o.nearest_distance) {
            const auto& cloud = std::get<PointCloudMeasure>(c_.data);
            const auto dist = nearest_distance(final_positions, cloud);
            CsvWriter csv(file("nearest_distance.csv"), {"path_id", "distance"});
            double sum = 0.0;
            std::size_t close = 0;
            for (std::size_t i = 0; i < dist.size(); ++i) {
                csv.cell(static_cast<std::uint64_t>(i)).cell(dist[i]).end_row();
                sum += dist[i];
                close += dist[i] < 0.05 ? 1 : 0;
            }
            // occupancy of each training point by the nearest final state
            std::vector<std::uint64_t> counts(cloud.size(), 0);
            for (std::size_t i = 0; i < final_positions.size(); ++i) {
                std::size_t best = 0;
                double bd = INFINITY;
                for (std::size_t k = 0; k < cloud.size(); ++k) {
                    double s = 0.0;
                    for (std::size_t a = 0; a < cloud.dim(); ++a) {
                        const double diff = final_positions.row(i)[a] - cloud.points().row(k)[a];
                        s += diff * diff;
                    }
                    if (s < bd) {
                        bd = s;
                        best = k;
                    }
                }
                ++counts[best];
            }
            CsvWriter occ(file("atom_counts.csv"), {"atom", "count"});
            for (std::size_t k = 0; k < counts.size(); ++k) occ.cell(static_cast<std::uint64_t>(k)).cell(counts[k]).end_row();
            summary_["nearest_distance"] = {{"mean", sum / static_cast<double>(dist.size())},
                                            {"fraction_within_0.05", static_cast<double>(close) / static_cast<double>(dist.size())}};
        }
        if (o.novikov_times) {
            std::vector<NovikovEstimate> rows;
            for (double t : *o.novikov_times) rows.push_back(novikov_estimate(e, c_.sde, c_.data, *c_.audit, t));
            write_novikov_csv(rows, file("novikov.csv"));
        }
        if (o.girsanov_times) {
            const auto acc = girsanov_log_weights(e, c_.sde, c_.data, *c_.audit);
            CsvWriter csv(file("girsanov.csv"), {"t", "mean_weight", "stderr", "log_scale"});
            for (double t : *o.girsanov_times) {
                const auto r = e.record_index(t);
                const auto s = summarize_exp_mean(acc.log_weight[r]);
                csv.cell(t).cell(s.estimate).cell(s.std_error).cell(std::string_view(s.log_scale ? "1" : "0")).end_row();
            }
        }
        if (o.drift_distance_times) {
            const auto curve = drift_distance_curve(e, c_.sde, c_.data, *c_.audit);
            std::vector<DriftDistancePoint> rows;
            for (const auto& p : curve)
                for (double t : *o.drift_distance_times)
                    if (std::abs(p.time - t) < 1e-12) rows.push_back(p);
            write_drift_distance_csv(rows, file("drift_distance.csv"));
        }
    }

    void prior_table() {
        const auto d = c_.sde.data_dim;
        std::vector<std::string> header{"T"};
        for (std::size_t i = 0; i < d; ++i) header.push_back("mean_" + std::to_string(i));
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < d; ++k) header.push_back("cov_" + std::to_string(i) + std::to_string(k));
        for (const char* h : {"isotropic_variance", "kl_bound", "kl_quadrature", "kl_isotropic_quadrature"}) header.emplace_back(h);
        CsvWriter csv(file("prior_table.csv"), header);
        for (double T : *c_.outputs.prior_table_T) {
            const auto fit = optimal_gaussian_prior(c_.data, T, false);
            const auto iso = optimal_gaussian_prior(c_.data, T, true);
            csv.cell(T);
            for (Eigen::Index i = 0; i < fit.mean.size(); ++i) csv.cell(fit.mean(i));
            for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i)
                for (Eigen::Index k = 0; k < fit.covariance.cols(); ++k) csv.cell(fit.covariance(i, k));
            csv.cell(iso.scalar).cell(fit.kl_bound);
            if (d <= 2) {
                const SdeSpec spec(SdeKind::Brownian, d, T);
                const auto pT = pushforward(spec, c_.data, T);
                const auto method = d == 1 ? KlMethod::Quadrature1D : KlMethod::Quadrature2D;
                csv.cell(kl_estimate(pT, fit.as_measure(), method)).cell(kl_estimate(pT, iso.as_measure(), method));
            } else {
                csv.cell(std::string_view("")).cell(std::string_view(""));
            }
            csv.end_row();
        }
    }

    void slope() {
        const auto& s = *c_.outputs.slope;
        const auto fit = drift_explosion_slope(c_.sde, std::get<PointCloudMeasure>(c_.data), s.times, s.n, c_.seed);
        CsvWriter csv(file("slope.csv"), {"t", "mean_norm", "fitted"});
        for (std::size_t i = 0; i < fit.times.size(); ++i)
            csv.cell(fit.times[i]).cell(fit.mean_norm[i]).cell(std::exp(fit.intercept + fit.slope * std::log(fit.times[i]))).end_row();
        summary_["slope"] = {{"slope", fit.slope}, {"intercept", fit.intercept}};
    }

    const ScenarioConfig& c_;
    fs::path dir_;
    std::size_t n_;
    std::vector<std::string> files_;
    json summary_ = json::object();
};

json versions() {
    return {{"sgmlab", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"boost", BOOST_LIB_VERSION},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                  "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}};
}

template <class E>
[[noreturn]] void rethrow_with_context(const std::string& name, const E& e) {
    throw E("scenario '" + name + "': " + e.what());
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& config, const fs::path& out_dir, const RunOptions& options) {
    ScenarioConfig effective = config;
    if (options.full && config.n_paths_full) effective.n_paths = *config.n_paths_full;
    const auto config_json = scenario_to_json(effective);

    ScenarioResult result;
    result.directory = out_dir;
    result.config_hash = sha256_hex(config_json.dump());
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw ConfigError("out", "cannot create output directory " + out_dir.string());

    Pipeline pipeline(effective, out_dir, effective.n_paths);
    json summary;
    try {
        summary = pipeline.run();
    } catch (const ConfigError&) {
        throw;
    } catch (const NumericalError& e) {
        rethrow_with_context(config.name, e);
    } catch (const std::invalid_argument& e) {
        rethrow_with_context(config.name, e);
    } catch (const std::domain_error& e) {
        rethrow_with_context(config.name, e);
    }

    json files = json::array();
    for (const auto& name : pipeline.files()) {
        OutputFile f{name, sha256_file(out_dir / name), fs::file_size(out_dir / name)};
        files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
        result.files.push_back(std::move(f));
    }
    const json manifest{{"scenario", config.name},
                        {"config_hash", result.config_hash},
                        {"config", config_json},
                        {"seed", effective.seed},
                        {"n_paths", effective.n_paths},
                        {"rng", std::string(kRngAlgorithm)},
                        {"versions", versions()},
                        {"files", files},
                        {"summary", summary}};
    std::ofstream out(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write manifest.json");
    return result;
}

}  // namespace sgm
