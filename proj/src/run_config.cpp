#include "vrec/run_config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrec/common.hpp"

namespace vrec {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError(path, msg);
}

std::string join_path(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

int edit_distance(const std::string& a, const std::string& b) {
    std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= b.size(); ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Rejects keys outside `allowed`, suggesting the nearest accepted spelling.
void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& key = it.key();
        if (std::any_of(allowed.begin(), allowed.end(),
                        [&](const char* a) { return key == a; }))
            continue;
        std::string best;
        int best_d = 4;  // suggest only close misses
        for (const char* a : allowed) {
            int d = edit_distance(key, a);
            if (d < best_d) {
                best_d = d;
                best = a;
            }
        }
        std::string msg = "unknown key";
        if (!best.empty()) msg += "; did you mean \"" + best + "\"?";
        fail(join_path(path, key), msg);
    }
}

const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return nullptr;
    return &*it;
}

const json& require(const json& obj, const char* key, const std::string& path) {
    const json* v = find(obj, key);
    if (!v) fail(join_path(path, key), "missing required field");
    return *v;
}

const json& require_object(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object");
    return v;
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    return v.get<double>();
}

int64_t as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
        fail(path, "expected an integer");
    return v.get<int64_t>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
}

int64_t int_at_least(const json& v, const std::string& path, int64_t lo) {
    int64_t x = as_integer(v, path);
    if (x < lo) fail(path, "must be >= " + std::to_string(lo));
    return x;
}

double num_positive(const json& v, const std::string& path) {
    double x = as_number(v, path);
    if (!(x > 0.0)) fail(path, "must be > 0");
    return x;
}

double num_at_least_zero(const json& v, const std::string& path) {
    double x = as_number(v, path);
    if (!(x >= 0.0)) fail(path, "must be >= 0");
    return x;
}

uint64_t as_seed(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    int64_t x = as_integer(v, path);
    if (x < 0) fail(path, "must be >= 0");
    return static_cast<uint64_t>(x);
}

/// Fixed-length numeric array (e.g. grid.size), each entry range-checked.
template <typename T, typename Fn>
std::vector<T> as_array(const json& v, const std::string& path, size_t n, Fn elem) {
    if (!v.is_array() || v.size() != n)
        fail(path, "expected an array of " + std::to_string(n) + " entries");
    std::vector<T> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i)
        out.push_back(elem(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<ProjectionGeometry> default_clinical() {
    ProjectionGeometry a, b;
    a.primary_deg = 30.0;   // first acquisition plane, typical RAO/LAO style pose
    a.secondary_deg = 0.0;
    b.primary_deg = 0.0;    // second plane rotated in the cranial/caudal arc
    b.secondary_deg = 30.0;
    return {a, b};
}

std::vector<ProjectionGeometry> default_orthogonal() {
    ProjectionGeometry a, b;
    a.primary_deg = 0.0;
    a.secondary_deg = 0.0;
    b.primary_deg = 90.0;
    b.secondary_deg = 0.0;
    return {a, b};
}

void parse_grid(const json& root, RunConfig& cfg) {
    const json& g = require_object(require(root, "grid", ""), "grid");
    check_keys(g, "grid", {"size", "spacing_mm"});
    auto size = as_array<int64_t>(require(g, "size", "grid"), "grid.size", 3,
                                  [](const json& v, const std::string& p) {
                                      return int_at_least(v, p, 1);
                                  });
    auto sp = as_array<double>(require(g, "spacing_mm", "grid"), "grid.spacing_mm", 3,
                               [](const json& v, const std::string& p) {
                                   return num_positive(v, p);
                               });
    cfg.grid = GridShape(static_cast<int>(size[0]), static_cast<int>(size[1]),
                         static_cast<int>(size[2]), sp[0], sp[1], sp[2]);
}

void parse_view_pair(const json& arr, const std::string& path,
                     const ProjectionGeometry& base,
                     std::vector<ProjectionGeometry>& out) {
    if (!arr.is_array() || arr.size() != 2)
        fail(path, "exactly two views are required");
    out.clear();
    for (size_t i = 0; i < 2; ++i) {
        std::string vp = path + "[" + std::to_string(i) + "]";
        const json& vj = require_object(arr[i], vp);
        check_keys(vj, vp, {"primary_deg", "secondary_deg", "dsd_mm", "dso_mm"});
        ProjectionGeometry g = base;
        g.primary_deg = as_number(require(vj, "primary_deg", vp), vp + ".primary_deg");
        g.secondary_deg =
            as_number(require(vj, "secondary_deg", vp), vp + ".secondary_deg");
        if (const json* d = find(vj, "dsd_mm")) g.dsd_mm = num_positive(*d, vp + ".dsd_mm");
        if (const json* d = find(vj, "dso_mm")) g.dso_mm = num_positive(*d, vp + ".dso_mm");
        out.push_back(g);
    }
}

void parse_views(const json& root, RunConfig& cfg) {
    ProjectionGeometry base;  // struct defaults: 512^2 detector, 0.2779 mm pitch
    const json* v = find(root, "views");
    if (v) {
        require_object(*v, "views");
        check_keys(*v, "views",
                   {"selected", "clinical", "orthogonal", "detector_size",
                    "pixel_spacing_mm", "dsd_mm", "dso_mm"});
        if (const json* s = find(*v, "selected"))
            cfg.selected_views = as_string(*s, "views.selected");
        if (const json* d = find(*v, "detector_size")) {
            auto det = as_array<int64_t>(*d, "views.detector_size", 2,
                                         [](const json& e, const std::string& p) {
                                             return int_at_least(e, p, 1);
                                         });
            base.det_u = static_cast<int>(det[0]);
            base.det_v = static_cast<int>(det[1]);
        }
        if (const json* d = find(*v, "pixel_spacing_mm")) {
            auto pitch = as_array<double>(*d, "views.pixel_spacing_mm", 2,
                                          [](const json& e, const std::string& p) {
                                              return num_positive(e, p);
                                          });
            base.du_mm = pitch[0];
            base.dv_mm = pitch[1];
        }
        if (const json* d = find(*v, "dsd_mm"))
            base.dsd_mm = num_positive(*d, "views.dsd_mm");
        if (const json* d = find(*v, "dso_mm"))
            base.dso_mm = num_positive(*d, "views.dso_mm");
    }
    auto with_angles = [&](std::vector<ProjectionGeometry> pair) {
        for (auto& g : pair) {
            double p = g.primary_deg, s = g.secondary_deg;
            g = base;
            g.primary_deg = p;
            g.secondary_deg = s;
        }
        return pair;
    };
    cfg.clinical = with_angles(default_clinical());
    cfg.orthogonal = with_angles(default_orthogonal());
    if (v) {
        if (const json* c = find(*v, "clinical"))
            parse_view_pair(*c, "views.clinical", base, cfg.clinical);
        if (const json* o = find(*v, "orthogonal"))
            parse_view_pair(*o, "views.orthogonal", base, cfg.orthogonal);
    }
}

void parse_encoder(const json& root, RunConfig& cfg) {
    const json* e = find(root, "encoder");
    if (!e) return;
    require_object(*e, "encoder");
    check_keys(*e, "encoder",
               {"kind", "levels", "table_size", "features", "coarsest_resolution",
                "growth_factor", "frequencies"});
    if (const json* k = find(*e, "kind")) {
        std::string kind = as_string(*k, "encoder.kind");
        if (kind == "hash")
            cfg.field.kind = EncoderKind::hash;
        else if (kind == "frequency")
            cfg.field.kind = EncoderKind::frequency;
        else
            fail("encoder.kind", "must be \"hash\" or \"frequency\"");
    }
    if (const json* x = find(*e, "levels"))
        cfg.field.hash.levels = static_cast<int>(int_at_least(*x, "encoder.levels", 1));
    if (const json* x = find(*e, "table_size")) {
        int64_t t = int_at_least(*x, "encoder.table_size", 1);
        if (t > (int64_t{1} << 31)) fail("encoder.table_size", "must be <= 2^31");
        cfg.field.hash.table_size = static_cast<uint32_t>(t);
    }
    if (const json* x = find(*e, "features"))
        cfg.field.hash.features = static_cast<int>(int_at_least(*x, "encoder.features", 1));
    if (const json* x = find(*e, "coarsest_resolution"))
        cfg.field.hash.coarsest_resolution =
            static_cast<int>(int_at_least(*x, "encoder.coarsest_resolution", 1));
    if (const json* x = find(*e, "growth_factor")) {
        double b = as_number(*x, "encoder.growth_factor");
        if (!(b > 1.0)) fail("encoder.growth_factor", "must be > 1");
        cfg.field.hash.growth_factor = b;
    }
    if (const json* x = find(*e, "frequencies"))
        cfg.field.freq.frequencies =
            static_cast<int>(int_at_least(*x, "encoder.frequencies", 1));
}

void parse_mlp(const json& root, RunConfig& cfg) {
    const json* m = find(root, "mlp");
    if (!m) return;
    require_object(*m, "mlp");
    check_keys(*m, "mlp", {"n_layers", "hidden_width", "leaky_slope"});
    if (const json* x = find(*m, "n_layers"))
        cfg.field.mlp.n_layers = static_cast<int>(int_at_least(*x, "mlp.n_layers", 2));
    if (const json* x = find(*m, "hidden_width"))
        cfg.field.mlp.hidden_width =
            static_cast<int>(int_at_least(*x, "mlp.hidden_width", 1));
    if (const json* x = find(*m, "leaky_slope")) {
        double s = as_number(*x, "mlp.leaky_slope");
        if (!(s > 0.0) || !(s < 1.0)) fail("mlp.leaky_slope", "must be in (0, 1)");
        cfg.field.mlp.leaky_slope = s;
    }
}

void parse_trainer(const json& root, RunConfig& cfg) {
    const json* t = find(root, "trainer");
    if (!t) return;
    require_object(*t, "trainer");
    check_keys(*t, "trainer",
               {"iterations", "lr", "adam_beta1", "adam_beta2", "adam_eps", "log_every",
                "thresholds", "chunk_points", "pixel_norm_override"});
    TrainConfig& tr = cfg.trainer;
    if (const json* x = find(*t, "iterations"))
        tr.iterations = int_at_least(*x, "trainer.iterations", 0);
    if (const json* x = find(*t, "lr")) tr.lr = num_positive(*x, "trainer.lr");
    auto beta = [&](const char* key, double& out) {
        if (const json* x = find(*t, key)) {
            std::string p = std::string("trainer.") + key;
            double b = as_number(*x, p);
            if (!(b >= 0.0) || !(b < 1.0)) fail(p, "must be in [0, 1)");
            out = b;
        }
    };
    beta("adam_beta1", tr.adam_beta1);
    beta("adam_beta2", tr.adam_beta2);
    if (const json* x = find(*t, "adam_eps"))
        tr.adam_eps = num_positive(*x, "trainer.adam_eps");
    if (const json* x = find(*t, "log_every"))
        tr.log_every = int_at_least(*x, "trainer.log_every", 1);
    if (const json* x = find(*t, "thresholds")) {
        if (!x->is_array() || x->empty())
            fail("trainer.thresholds", "expected a non-empty array");
        tr.binarize_thresholds.clear();
        for (size_t i = 0; i < x->size(); ++i) {
            std::string p = "trainer.thresholds[" + std::to_string(i) + "]";
            double th = as_number((*x)[i], p);
            if (!(th > 0.0) || !(th < 1.0)) fail(p, "must be in (0, 1)");
            tr.binarize_thresholds.push_back(th);
        }
    }
    if (const json* x = find(*t, "chunk_points"))
        tr.chunk_points = int_at_least(*x, "trainer.chunk_points", 1);
    if (const json* x = find(*t, "pixel_norm_override"))
        tr.pixel_norm_override = num_positive(*x, "trainer.pixel_norm_override");
}

void parse_projector(const json& root, RunConfig& cfg) {
    const json* p = find(root, "projector");
    if (!p) return;
    require_object(*p, "projector");
    check_keys(*p, "projector", {"step_mm", "noise_sigma", "noise_seed"});
    ProjectorConfig& pr = cfg.trainer.projector;
    if (const json* x = find(*p, "step_mm"))
        pr.step_mm = num_at_least_zero(*x, "projector.step_mm");
    if (const json* x = find(*p, "noise_sigma"))
        pr.noise_sigma = num_at_least_zero(*x, "projector.noise_sigma");
    if (const json* x = find(*p, "noise_seed"))
        pr.noise_seed = as_seed(*x, "projector.noise_seed");
}

void parse_phantom(const json& root, RunConfig& cfg) {
    const json* p = find(root, "phantom");
    if (!p) return;
    require_object(*p, "phantom");
    check_keys(*p, "phantom",
               {"n_branches", "radius_root_mm", "radius_taper", "branch_angle_range_deg",
                "control_points"});
    PhantomSpec& ph = cfg.phantom;
    if (const json* x = find(*p, "n_branches"))
        ph.n_branches = static_cast<int>(int_at_least(*x, "phantom.n_branches", 1));
    if (const json* x = find(*p, "radius_root_mm"))
        ph.radius_root_mm = num_positive(*x, "phantom.radius_root_mm");
    if (const json* x = find(*p, "radius_taper")) {
        double t = as_number(*x, "phantom.radius_taper");
        if (!(t > 0.0) || !(t <= 1.0)) fail("phantom.radius_taper", "must be in (0, 1]");
        ph.radius_taper = t;
    }
    if (const json* x = find(*p, "branch_angle_range_deg")) {
        double a = as_number(*x, "phantom.branch_angle_range_deg");
        if (!(a >= 0.0) || !(a <= 180.0))
            fail("phantom.branch_angle_range_deg", "must be in [0, 180]");
        ph.branch_angle_range_deg = a;
    }
    if (const json* x = find(*p, "control_points"))
        ph.control_points = static_cast<int>(int_at_least(*x, "phantom.control_points", 2));
}

std::string fmt_num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", x);
    return buf;
}

json view_to_json(const ProjectionGeometry& g) {
    return json{{"dsd_mm", g.dsd_mm},
                {"dso_mm", g.dso_mm},
                {"primary_deg", g.primary_deg},
                {"secondary_deg", g.secondary_deg},
                {"detector_size", {g.det_u, g.det_v}},
                {"pixel_spacing_mm", {g.du_mm, g.dv_mm}}};
}

json grid_to_json(const GridShape& g) {
    return json{{"size", {g.nx, g.ny, g.nz}}, {"spacing_mm", {g.sx, g.sy, g.sz}}};
}

json phantom_to_json(const PhantomSpec& p) {
    return json{{"n_branches", p.n_branches},
                {"radius_root_mm", p.radius_root_mm},
                {"radius_taper", p.radius_taper},
                {"branch_angle_range_deg", p.branch_angle_range_deg},
                {"control_points", p.control_points}};
}

json projector_to_json(const ProjectorConfig& p) {
    return json{{"step_mm", p.step_mm},
                {"noise_sigma", p.noise_sigma},
                {"noise_seed", p.noise_seed}};
}

std::string id_from_json(const json& j) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

}  // namespace

double RunConfig::primary_threshold() const {
    const auto& ts = trainer.binarize_thresholds;
    for (double t : ts)
        if (t == 0.5) return t;
    return ts[ts.size() / 2];
}

void RunConfig::finalize() {
    warnings.clear();
    grid.validate();
    if (selected_views != "clinical" && selected_views != "orthogonal")
        fail("views.selected", "must be \"clinical\" or \"orthogonal\"");
    auto check_pair = [](const std::vector<ProjectionGeometry>& pair,
                         const std::string& path) {
        if (pair.size() != 2) fail(path, "exactly two views are required");
        for (const auto& g : pair) g.validate();
    };
    check_pair(clinical, "views.clinical");
    check_pair(orthogonal, "views.orthogonal");
    field.mlp.in_dim = field.encoder_out_dim();
    field.validate();
    if (trainer.binarize_thresholds.empty())
        fail("trainer.thresholds", "must contain at least one value");
    trainer.seed = seed;
    trainer.validate();
    phantom.grid = grid;
    phantom.seed = seed;
    phantom.validate();
    if (threads < 1) fail("threads", "must be >= 1");
    if (output_dir.empty()) fail("output_dir", "must be a non-empty path");

    // Plausibility hints for the clinical pair: warn outside the angle ranges
    // seen across routine two-plane coronary acquisitions, but never fail.
    constexpr double kPrimaryLo = -47.0, kPrimaryHi = 42.0;
    constexpr double kSecondaryLo = -8.0, kSecondaryHi = 45.0;
    for (size_t i = 0; i < clinical.size(); ++i) {
        auto hint = [&](const char* name, double val, double lo, double hi) {
            if (val < lo || val > hi)
                warnings.push_back("views.clinical[" + std::to_string(i) + "]." + name +
                                   " = " + fmt_num(val) +
                                   " is outside the typical acquisition range [" +
                                   fmt_num(lo) + ", " + fmt_num(hi) + "] deg");
        };
        hint("primary_deg", clinical[i].primary_deg, kPrimaryLo, kPrimaryHi);
        hint("secondary_deg", clinical[i].secondary_deg, kSecondaryLo, kSecondaryHi);
    }
}

std::string RunConfig::canonical_json() const {
    json views = {{"selected", selected_views},
                  {"clinical", {view_to_json(clinical[0]), view_to_json(clinical[1])}},
                  {"orthogonal",
                   {view_to_json(orthogonal[0]), view_to_json(orthogonal[1])}}};
    json encoder = {{"kind", field.kind == EncoderKind::hash ? "hash" : "frequency"},
                    {"levels", field.hash.levels},
                    {"table_size", field.hash.table_size},
                    {"features", field.hash.features},
                    {"coarsest_resolution", field.hash.coarsest_resolution},
                    {"growth_factor", field.hash.growth_factor},
                    {"frequencies", field.freq.frequencies}};
    json mlp = {{"n_layers", field.mlp.n_layers},
                {"hidden_width", field.mlp.hidden_width},
                {"leaky_slope", field.mlp.leaky_slope}};
    json tr = {{"iterations", trainer.iterations},
               {"lr", trainer.lr},
               {"adam_beta1", trainer.adam_beta1},
               {"adam_beta2", trainer.adam_beta2},
               {"adam_eps", trainer.adam_eps},
               {"log_every", trainer.log_every},
               {"thresholds", trainer.binarize_thresholds},
               {"chunk_points", trainer.chunk_points},
               {"pixel_norm_override", trainer.pixel_norm_override
                                           ? json(*trainer.pixel_norm_override)
                                           : json(nullptr)}};
    json doc = {{"deterministic", deterministic},
                {"encoder", encoder},
                {"grid", grid_to_json(grid)},
                {"ground_truth", ground_truth},
                {"input_volume", input_volume},
                {"mlp", mlp},
                {"phantom", phantom_to_json(phantom)},
                {"projector", projector_to_json(trainer.projector)},
                {"seed", seed},
                {"trainer", tr},
                {"views", views}};
    return doc.dump();
}

std::string RunConfig::phantom_id() const {
    return id_from_json(json{{"grid", grid_to_json(grid)},
                             {"phantom", phantom_to_json(phantom)},
                             {"seed", seed}});
}

std::string RunConfig::data_id() const {
    const auto& av = active_views();
    json source = input_volume.empty() ? json{{"phantom", phantom_to_json(phantom)}}
                                       : json{{"input_volume", input_volume}};
    return id_from_json(json{{"grid", grid_to_json(grid)},
                             {"projector", projector_to_json(trainer.projector)},
                             {"seed", seed},
                             {"source", source},
                             {"views", {view_to_json(av[0]), view_to_json(av[1])}}});
}

std::string RunConfig::run_id() const { return id_from_json(json::parse(canonical_json())); }

RunConfig parse_and_validate(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail("config", std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("config", "top level must be a JSON object");
    check_keys(root, "",
               {"grid", "views", "encoder", "mlp", "trainer", "projector", "phantom",
                "input_volume", "ground_truth", "seed", "deterministic", "threads",
                "output_dir"});
    RunConfig cfg;
    parse_grid(root, cfg);
    parse_views(root, cfg);
    parse_encoder(root, cfg);
    parse_mlp(root, cfg);
    parse_trainer(root, cfg);
    parse_projector(root, cfg);
    parse_phantom(root, cfg);
    if (const json* x = find(root, "input_volume"))
        cfg.input_volume = as_string(*x, "input_volume");
    if (const json* x = find(root, "ground_truth"))
        cfg.ground_truth = as_string(*x, "ground_truth");
    if (const json* x = find(root, "seed")) cfg.seed = as_seed(*x, "seed");
    if (const json* x = find(root, "deterministic"))
        cfg.deterministic = as_bool(*x, "deterministic");
    if (const json* x = find(root, "threads"))
        cfg.threads = static_cast<int>(int_at_least(*x, "threads", 1));
    if (const json* x = find(root, "output_dir"))
        cfg.output_dir = as_string(*x, "output_dir");
    cfg.finalize();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed to read config file: " + path);
    return parse_and_validate(ss.str());
}

}  // namespace vrec
