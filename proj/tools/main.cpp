// Command-line driver for the two-view vessel reconstruction pipeline.
//
// One JSON config file drives every stage; stages hand artifacts to each
// other through content-addressed directories under the configured output
// root, so `phantom && simulate && reconstruct && evaluate` composes without
// manual file wiring.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure
// (non-finite loss), 4 I/O or operational error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vrec/aso.hpp"
#include "vrec/io.hpp"
#include "vrec/metrics.hpp"
#include "vrec/run_config.hpp"
#include "vrec/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vrec;

namespace {

constexpr const char* kProgramVersion = "1.0.0";

// ---------------------------------------------------------------------------
// small shared helpers

std::string num_str(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("failed to write: " + path);
}

void make_dirs(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

VolumeGrid load_any_volume(const std::string& path) {
    if (ends_with(path, ".raw")) return load_volume(path);
    return import_medical_volume(path);
}

ParallelConfig par_of(const RunConfig& cfg) {
    return ParallelConfig{cfg.threads, cfg.deterministic};
}

void check_grid_match(const VolumeGrid& vol, const GridShape& grid, const std::string& field) {
    if (vol.nx != grid.nx || vol.ny != grid.ny || vol.nz != grid.nz)
        throw ConfigError(field, "volume is " + std::to_string(vol.nx) + "x" +
                                     std::to_string(vol.ny) + "x" + std::to_string(vol.nz) +
                                     " but grid.size is " + std::to_string(grid.nx) + "x" +
                                     std::to_string(grid.ny) + "x" + std::to_string(grid.nz));
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)}); };
    if (!close(vol.sx, grid.sx) || !close(vol.sy, grid.sy) || !close(vol.sz, grid.sz))
        throw ConfigError(field, "volume spacing (" + num_str(vol.sx) + ", " + num_str(vol.sy) +
                                     ", " + num_str(vol.sz) + ") mm does not match grid.spacing_mm");
}

/// Ground truth for metric logging and evaluation: an explicit ground_truth
/// path wins; otherwise the phantom generated from this config, when present.
std::optional<VolumeGrid> resolve_ground_truth(const RunConfig& cfg, bool required) {
    std::string path;
    std::string field = "ground_truth";
    if (!cfg.ground_truth.empty()) {
        path = cfg.ground_truth;
    } else if (cfg.input_volume.empty()) {
        std::string p = cfg.phantom_dir() + "/phantom.raw";
        if (fs::exists(p)) path = p;
    }
    if (path.empty()) {
        if (required)
            throw ConfigError("ground_truth",
                              "no ground truth available: run the phantom subcommand or set ground_truth");
        return std::nullopt;
    }
    VolumeGrid gt = load_any_volume(path);
    check_grid_match(gt, cfg.grid, field);
    if (!gt.is_binary())
        throw ConfigError(field, "ground-truth volume must be binary (values 0/1): " + path);
    return gt;
}

// ---------------------------------------------------------------------------
// CSV tables (evaluation.csv readers for aso/aggregate)

struct MetricsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> rows;

    int col(const std::string& name) const {
        for (size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        return -1;
    }
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

MetricsTable read_metrics_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open metrics file: " + path);
    MetricsTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty metrics file: " + path);
    t.columns = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.columns.size())
            throw IoError("malformed row in " + path + ": expected " +
                          std::to_string(t.columns.size()) + " cells, found " +
                          std::to_string(cells.size()));
        std::vector<std::optional<double>> row;
        row.reserve(cells.size());
        for (const std::string& c : cells) {
            if (c.empty()) {
                row.push_back(std::nullopt);
                continue;
            }
            char* end = nullptr;
            double v = std::strtod(c.c_str(), &end);
            if (end == c.c_str() || *end != '\0')
                throw IoError("non-numeric cell \"" + c + "\" in " + path);
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

struct MetricSpec {
    const char* name;
    bool higher_is_better;
};

constexpr MetricSpec kHeadlineMetrics[] = {
    {"clDice", true}, {"Dice", true},     {"IoU", true},
    {"reError", false}, {"CD_l2", false}, {"reMSE", false},
};

// ---------------------------------------------------------------------------
// common CLI plumbing

struct CommonOpts {
    std::string config_path;
    int threads = 1;
    uint64_t seed = 0;
    std::string encoder;
    std::string views;
    bool deterministic = true;
    CLI::Option* o_threads = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_encoder = nullptr;
    CLI::Option* o_views = nullptr;
    CLI::Option* o_det = nullptr;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("--config", o.config_path, "JSON run configuration file")
        ->required();
    o.o_threads = sub->add_option("--threads", o.threads,
                                  "worker threads (overrides config)")
                      ->check(CLI::PositiveNumber);
    o.o_seed = sub->add_option("--seed", o.seed, "master RNG seed (overrides config)");
    o.o_encoder = sub->add_option("--encoder", o.encoder,
                                  "encoder kind (overrides config)")
                      ->check(CLI::IsMember({"hash", "frequency"}));
    o.o_views = sub->add_option("--views", o.views,
                                "which stored view pair to use (overrides config)")
                    ->check(CLI::IsMember({"clinical", "orthogonal"}));
    o.o_det = sub->add_flag("--deterministic,!--no-deterministic", o.deterministic,
                            "bitwise-reproducible mode (overrides config)");
}

RunConfig load_with_overrides(const CommonOpts& o) {
    RunConfig cfg = load_run_config(o.config_path);
    if (o.o_threads->count()) cfg.threads = o.threads;
    if (o.o_seed->count()) cfg.seed = o.seed;
    if (o.o_encoder->count())
        cfg.field.kind = o.encoder == "hash" ? EncoderKind::hash : EncoderKind::frequency;
    if (o.o_views->count()) cfg.selected_views = o.views;
    if (o.o_det->count()) cfg.deterministic = o.deterministic;
    cfg.finalize();
    for (const std::string& w : cfg.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return cfg;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_phantom(const RunConfig& cfg) {
    const std::string dir = cfg.phantom_dir();
    make_dirs(dir);
    PhantomInfo info;
    VolumeGrid vol = generate_phantom(cfg.phantom, par_of(cfg), &info);
    save_volume(dir + "/phantom.raw", vol, VolumeDtype::uint8);

    json branches = json::array();
    for (const PhantomBranch& b : info.branches) {
        double len = 0.0;
        for (size_t i = 1; i < b.centerline.size(); ++i)
            len += (b.centerline[i] - b.centerline[i - 1]).norm();
        branches.push_back({{"level", b.level},
                            {"parent", b.parent},
                            {"radius_mm", b.radius_mm},
                            {"centerline_points", b.centerline.size()},
                            {"length_mm", len}});
    }
    int64_t fg = 0;
    for (float v : vol.data) fg += v != 0.0f;
    json doc = {{"phantom_id", cfg.phantom_id()},
                {"seed", cfg.seed},
                {"attempts", info.attempts},
                {"foreground_voxels", fg},
                {"branches", branches}};
    write_text(dir + "/phantom_info.json", doc.dump(2) + "\n");
    std::printf("phantom %s: %lld foreground voxels, %zu branches -> %s\n",
                cfg.phantom_id().c_str(), static_cast<long long>(fg), info.branches.size(),
                dir.c_str());
    return 0;
}

int cmd_simulate(const RunConfig& cfg) {
    VolumeGrid vol;
    if (!cfg.input_volume.empty()) {
        vol = load_any_volume(cfg.input_volume);
        check_grid_match(vol, cfg.grid, "input_volume");
    } else {
        std::string p = cfg.phantom_dir() + "/phantom.raw";
        if (!fs::exists(p))
            throw IoError("phantom volume not found: " + p + "; run the phantom subcommand first");
        vol = load_volume(p);
    }
    ProjectorConfig pc = cfg.trainer.projector;
    pc.parallel = par_of(cfg);
    const std::string dir = cfg.data_dir();
    auto images = simulate_inputs(vol, cfg.active_views(), pc, dir);
    for (size_t i = 0; i < images.size(); ++i) {
        double mass = 0.0;
        for (double v : images[i].data) mass += v;
        std::printf("view_%zu: %dx%d px, total path length %.6g mm\n", i,
                    images[i].geometry.det_u, images[i].geometry.det_v, mass);
    }
    std::printf("projections -> %s\n", dir.c_str());
    return 0;
}

/// Frozen-format metrics row with empty metric cells, for runs that have no
/// ground truth to score against.
std::string loss_only_row(int64_t iteration, double threshold, double loss) {
    std::string s = std::to_string(iteration);
    s += ',' + num_str(threshold) + ',' + num_str(loss);
    for (int i = 0; i < 8; ++i) s += ',';
    return s;
}

json manifest_json(const RunConfig& cfg, const TrainResult& res, double wall_seconds) {
    json doc = {
        {"run_id", cfg.run_id()},
        {"data_id", cfg.data_id()},
        {"phantom_id", cfg.phantom_id()},
        {"seed", cfg.seed},
        {"deterministic", cfg.deterministic},
        {"threads", cfg.threads},
        {"selected_views", cfg.selected_views},
        {"encoder", cfg.field.kind == EncoderKind::hash ? "hash" : "frequency"},
        {"primary_threshold", cfg.primary_threshold()},
        {"skeletonization", skeletonization_method()},
        {"iterations_completed", res.records.size()},
        {"aborted", res.aborted},
        {"final_loss",
         res.records.empty() ? json(nullptr) : json(res.records.back().loss)},
        {"wall_seconds", wall_seconds},
        {"versions",
         {{"program", kProgramVersion},
          {"config_format", 1},
          {"volume_format", 1},
          {"projection_format", 1},
          {"encoder_checkpoint", "VRTHETA1"},
          {"mlp_checkpoint", "VRECPHI1"},
          {"snapshot", "VRSNAP01"}}},
        {"config", json::parse(cfg.canonical_json())},
    };
    return doc;
}

int cmd_reconstruct(const RunConfig& cfg) {
    const std::string ddir = cfg.data_dir();
    std::vector<ProjectionImage> targets;
    for (int i = 0; i < 2; ++i) {
        std::string p = ddir + "/view_" + std::to_string(i) + ".raw";
        if (!fs::exists(p))
            throw IoError("projection not found: " + p + "; run the simulate subcommand first");
        targets.push_back(load_projection(p));
    }
    const auto& av = cfg.active_views();
    for (int i = 0; i < 2; ++i) {
        const ProjectionGeometry &a = targets[static_cast<size_t>(i)].geometry, &b = av[static_cast<size_t>(i)];
        if (a.dsd_mm != b.dsd_mm || a.dso_mm != b.dso_mm || a.primary_deg != b.primary_deg ||
            a.secondary_deg != b.secondary_deg || a.det_u != b.det_u || a.det_v != b.det_v ||
            a.du_mm != b.du_mm || a.dv_mm != b.dv_mm)
            throw ConfigError("views", "stored projections in " + ddir +
                                           " do not match the configured geometry; re-run simulate");
    }

    std::optional<VolumeGrid> gt = resolve_ground_truth(cfg, /*required=*/false);

    TrainConfig tc = cfg.trainer;
    tc.binarize_thresholds = {cfg.primary_threshold()};
    tc.projector.noise_sigma = 0.0;  // noise belongs to measurement simulation only
    tc.projector.noise_seed = 0;
    tc.projector.parallel = par_of(cfg);

    VolumeGrid domain(cfg.grid.nx, cfg.grid.ny, cfg.grid.nz, cfg.grid.sx, cfg.grid.sy,
                      cfg.grid.sz);

    auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train(cfg.field, domain, targets, tc, gt ? &*gt : nullptr);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string rdir = cfg.run_dir();
    make_dirs(rdir);

    {
        std::string csv = "iteration,loss\n";
        for (const TrainRecord& r : res.records)
            csv += std::to_string(r.iteration) + ',' + num_str(r.loss) + '\n';
        write_text(rdir + "/loss.csv", csv);
    }
    {
        std::string csv = metrics_csv_header();
        csv += '\n';
        for (const TrainRecord& r : res.records) {
            bool logged = r.iteration % tc.log_every == 0 || r.iteration == tc.iterations;
            if (!logged) continue;
            if (!r.reports.empty())
                csv += metrics_csv_row(r.iteration, r.loss, r.reports.front()) + '\n';
            else
                csv += loss_only_row(r.iteration, cfg.primary_threshold(), r.loss) + '\n';
        }
        write_text(rdir + "/metrics.csv", csv);
    }
    write_text(rdir + "/manifest.json", manifest_json(cfg, res, wall).dump(2) + "\n");

    if (res.aborted) {
        std::fprintf(stderr,
                     "numerical failure: non-finite loss after %zu iterations; "
                     "partial logs in %s\n",
                     res.records.size(), rdir.c_str());
        return 3;
    }

    domain.data = render_field_values<float>(cfg.field, res.params, domain, tc.chunk_points,
                                             par_of(cfg));
    save_volume(rdir + "/volume_final.raw", domain, VolumeDtype::float32);
    for (double t : cfg.trainer.binarize_thresholds)
        save_volume(rdir + "/volume_bin_" + num_str(t) + ".raw", binarize(domain, t),
                    VolumeDtype::uint8);

    if (cfg.field.kind == EncoderKind::hash)
        save_theta(rdir + "/theta_final.bin", cfg.field.hash, res.params.theta);
    save_phi(rdir + "/phi_final.bin", res.params.phi);
    TrainSnapshot snap;
    snap.iteration = static_cast<int64_t>(res.records.size());
    snap.params = res.params;
    snap.adam = res.adam;
    save_snapshot(rdir + "/snapshot_final.bin", cfg.field, snap);

    double final_loss = res.records.empty() ? 0.0 : res.records.back().loss;
    std::printf("run %s: %zu iterations, final loss %.6g, %.1f s\n", cfg.run_id().c_str(),
                res.records.size(), final_loss, wall);
    if (gt) {
        for (auto it = res.records.rbegin(); it != res.records.rend(); ++it) {
            if (it->reports.empty()) continue;
            const MetricsReport& m = it->reports.front();
            std::printf("threshold %.2f: Dice %.4f, IoU %.4f%s\n", m.threshold, m.dice, m.iou,
                        m.cl_dice ? (", clDice " + num_str(*m.cl_dice)).c_str() : "");
            break;
        }
    }
    std::printf("outputs -> %s\n", rdir.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    const std::string rdir = cfg.run_dir();
    const std::string vpath = rdir + "/volume_final.raw";
    if (!fs::exists(vpath))
        throw IoError("reconstruction not found: " + vpath + "; run the reconstruct subcommand first");
    VolumeGrid recon = load_volume(vpath);
    check_grid_match(recon, cfg.grid, "grid");
    VolumeGrid gt = *resolve_ground_truth(cfg, /*required=*/true);

    int64_t final_iter = cfg.trainer.iterations;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    if (fs::exists(rdir + "/loss.csv")) {
        MetricsTable t = read_metrics_table(rdir + "/loss.csv");
        int ci = t.col("iteration"), cl = t.col("loss");
        if (!t.rows.empty() && ci >= 0 && cl >= 0) {
            const auto& last = t.rows.back();
            if (last[static_cast<size_t>(ci)])
                final_iter = static_cast<int64_t>(*last[static_cast<size_t>(ci)]);
            if (last[static_cast<size_t>(cl)]) final_loss = *last[static_cast<size_t>(cl)];
        }
    }

    std::string csv = metrics_csv_header();
    csv += '\n';
    std::printf("%-10s %8s %8s %8s %10s %10s %10s\n", "threshold", "Dice", "clDice", "IoU",
                "reError", "CD_l2", "reMSE");
    for (double t : cfg.trainer.binarize_thresholds) {
        MetricsReport m = evaluate_reconstruction(recon, gt, t);
        csv += metrics_csv_row(final_iter, final_loss, m) + '\n';
        auto opt = [](const std::optional<double>& v) {
            return v ? num_str(*v) : std::string("-");
        };
        std::printf("%-10.3g %8.4f %8s %8.4f %10s %10s %10.6g\n", t, m.dice,
                    opt(m.cl_dice).c_str(), m.iou, opt(m.re_error).c_str(),
                    opt(m.chamfer_l2).c_str(), m.re_mse);
    }
    write_text(rdir + "/evaluation.csv", csv);
    std::printf("evaluation -> %s/evaluation.csv\n", rdir.c_str());
    return 0;
}

int cmd_aso(const std::vector<std::string>& group_a, const std::vector<std::string>& group_b,
            double threshold, double alpha, double tau, int n_bootstrap, uint64_t seed,
            const std::string& out_path) {
    auto collect = [&](const std::vector<std::string>& files, const MetricSpec& spec) {
        std::vector<double> vals;
        for (const std::string& f : files) {
            MetricsTable t = read_metrics_table(f);
            int ct = t.col("threshold"), cm = t.col(spec.name);
            if (ct < 0 || cm < 0)
                throw IoError("column " + std::string(spec.name) + " or threshold missing in " + f);
            for (const auto& row : t.rows) {
                const auto& tv = row[static_cast<size_t>(ct)];
                const auto& mv = row[static_cast<size_t>(cm)];
                if (tv && std::abs(*tv - threshold) < 1e-9) {
                    if (mv) vals.push_back(spec.higher_is_better ? *mv : -*mv);
                    break;
                }
            }
        }
        return vals;
    };

    json metrics = json::object();
    std::printf("%-8s %6s %6s %12s %12s %s\n", "metric", "n_a", "n_b", "eps_min", "eps_hat",
                "verdict");
    for (const MetricSpec& spec : kHeadlineMetrics) {
        std::vector<double> a = collect(group_a, spec);
        std::vector<double> b = collect(group_b, spec);
        json entry = {{"n_a", a.size()},
                      {"n_b", b.size()},
                      {"higher_is_better", spec.higher_is_better}};
        if (a.empty() || b.empty()) {
            entry["skipped"] = "no samples at the requested threshold";
            std::printf("%-8s %6zu %6zu %12s %12s skipped\n", spec.name, a.size(), b.size(), "-",
                        "-");
        } else {
            auto r = aso_test(a, b, alpha, tau, n_bootstrap, seed);
            if (!r) {
                entry["degenerate"] = true;
                std::printf("%-8s %6zu %6zu %12s %12s degenerate\n", spec.name, a.size(),
                            b.size(), "-", "-");
            } else {
                entry["epsilon_min"] = r->epsilon_min;
                entry["epsilon_hat"] = r->epsilon_hat;
                entry["dominant"] = r->dominant;
                std::printf("%-8s %6zu %6zu %12.6f %12.6f %s\n", spec.name, a.size(), b.size(),
                            r->epsilon_min, r->epsilon_hat,
                            r->dominant ? "A dominates B" : "not dominant");
            }
        }
        metrics[spec.name] = entry;
    }
    json doc = {{"alpha", alpha},       {"tau", tau},
                {"n_bootstrap", n_bootstrap}, {"seed", seed},
                {"threshold", threshold},     {"group_a", group_a},
                {"group_b", group_b},         {"metrics", metrics}};
    write_text(out_path, doc.dump(2) + "\n");
    std::printf("report -> %s\n", out_path.c_str());
    return 0;
}

int cmd_aggregate(const std::vector<std::string>& files, const std::string& out_path) {
    // threshold (scaled to avoid float keys) -> metric name -> samples
    std::map<int64_t, std::map<std::string, std::vector<double>>> acc;
    std::map<int64_t, int> row_counts;
    for (const std::string& f : files) {
        MetricsTable t = read_metrics_table(f);
        int ct = t.col("threshold");
        if (ct < 0) throw IoError("column threshold missing in " + f);
        for (const auto& row : t.rows) {
            const auto& tv = row[static_cast<size_t>(ct)];
            if (!tv) continue;
            int64_t key = std::llround(*tv * 1e9);
            ++row_counts[key];
            for (const MetricSpec& spec : kHeadlineMetrics) {
                int cm = t.col(spec.name);
                if (cm < 0) continue;
                const auto& mv = row[static_cast<size_t>(cm)];
                if (mv) acc[key][spec.name].push_back(*mv);
            }
        }
    }
    if (row_counts.empty()) throw IoError("no metric rows found in the given files");

    std::string csv = "threshold,n";
    for (const MetricSpec& spec : kHeadlineMetrics)
        csv += ',' + std::string(spec.name) + "_mean," + spec.name + "_std";
    csv += '\n';
    std::printf("%-10s %4s", "threshold", "n");
    for (const MetricSpec& spec : kHeadlineMetrics) std::printf(" %18s", spec.name);
    std::printf("\n");
    for (const auto& [key, n] : row_counts) {
        double thr = static_cast<double>(key) / 1e9;
        csv += num_str(thr) + ',' + std::to_string(n);
        std::printf("%-10.3g %4d", thr, n);
        for (const MetricSpec& spec : kHeadlineMetrics) {
            const auto it = acc[key].find(spec.name);
            if (it == acc[key].end() || it->second.empty()) {
                csv += ",,";
                std::printf(" %18s", "-");
                continue;
            }
            const std::vector<double>& v = it->second;
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
            csv += ',' + num_str(mean) + ',' + num_str(sd);
            char cell[64];
            std::snprintf(cell, sizeof cell, "%.4f+/-%.4f", mean, sd);
            std::printf(" %18s", cell);
        }
        csv += '\n';
        std::printf("\n");
    }
    write_text(out_path, csv);
    std::printf("table -> %s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-view coronary vessel reconstruction toolkit"};
    app.require_subcommand(1);

    CommonOpts phantom_o, simulate_o, reconstruct_o, evaluate_o;
    CLI::App* sub_phantom =
        app.add_subcommand("phantom", "generate the synthetic vessel-tree ground truth");
    add_common(sub_phantom, phantom_o);
    CLI::App* sub_simulate =
        app.add_subcommand("simulate", "project the input volume into the two views");
    add_common(sub_simulate, simulate_o);
    CLI::App* sub_reconstruct =
        app.add_subcommand("reconstruct", "optimize the occupancy field against the projections");
    add_common(sub_reconstruct, reconstruct_o);
    CLI::App* sub_evaluate =
        app.add_subcommand("evaluate", "score the reconstruction at every configured threshold");
    add_common(sub_evaluate, evaluate_o);

    std::vector<std::string> aso_a, aso_b;
    double aso_threshold = 0.5, aso_alpha = 0.05, aso_tau = 0.2;
    int aso_bootstrap = 1000;
    uint64_t aso_seed = 0;
    std::string aso_out = "aso.json";
    CLI::App* sub_aso = app.add_subcommand(
        "aso", "almost-stochastic-order comparison of two groups of evaluation files");
    sub_aso->add_option("--a", aso_a, "evaluation.csv files of group A")->required();
    sub_aso->add_option("--b", aso_b, "evaluation.csv files of group B")->required();
    sub_aso->add_option("--threshold", aso_threshold, "binarization threshold to compare at");
    sub_aso->add_option("--alpha", aso_alpha, "confidence level")
        ->check(CLI::Range(1e-6, 0.5));
    sub_aso->add_option("--tau", aso_tau, "dominance decision threshold on epsilon_min")
        ->check(CLI::Range(0.0, 1.0));
    sub_aso->add_option("--bootstrap", aso_bootstrap, "bootstrap resamples")
        ->check(CLI::PositiveNumber);
    sub_aso->add_option("--seed", aso_seed, "bootstrap RNG seed");
    sub_aso->add_option("--out", aso_out, "output JSON path");

    std::vector<std::string> agg_files;
    std::string agg_out = "aggregate.csv";
    CLI::App* sub_aggregate = app.add_subcommand(
        "aggregate", "mean/std summary table over evaluation files, per metric and threshold");
    sub_aggregate->add_option("files", agg_files, "evaluation.csv files")->required();
    sub_aggregate->add_option("--out", agg_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(sub_phantom)) return cmd_phantom(load_with_overrides(phantom_o));
        if (app.got_subcommand(sub_simulate)) return cmd_simulate(load_with_overrides(simulate_o));
        if (app.got_subcommand(sub_reconstruct))
            return cmd_reconstruct(load_with_overrides(reconstruct_o));
        if (app.got_subcommand(sub_evaluate)) return cmd_evaluate(load_with_overrides(evaluate_o));
        if (app.got_subcommand(sub_aso))
            return cmd_aso(aso_a, aso_b, aso_threshold, aso_alpha, aso_tau, aso_bootstrap,
                           aso_seed, aso_out);
        if (app.got_subcommand(sub_aggregate)) return cmd_aggregate(agg_files, agg_out);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
