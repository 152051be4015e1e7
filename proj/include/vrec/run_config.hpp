#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrec/field.hpp"
#include "vrec/geometry.hpp"
#include "vrec/phantom.hpp"
#include "vrec/trainer.hpp"
#include "vrec/volume.hpp"

namespace vrec {

/// Fully resolved run description shared by every subcommand. One config file
/// drives the whole pipeline (phantom -> simulate -> reconstruct -> evaluate);
/// the artifact ids below wire the stages together without manual file paths.
struct RunConfig {
    GridShape grid;

    /// Which of the two stored view pairs drives simulation/reconstruction.
    std::string selected_views = "clinical";
    std::vector<ProjectionGeometry> clinical;    // always exactly two views
    std::vector<ProjectionGeometry> orthogonal;  // always exactly two views

    FieldSpec field;      // encoder + occupancy MLP
    TrainConfig trainer;  // optimizer, logging, projector settings
    PhantomSpec phantom;  // synthetic ground-truth generator settings

    /// Optional path to a measured input volume (.raw with sidecar, NIfTI-1,
    /// or NRRD). When set, `simulate` projects this volume instead of the
    /// synthetic phantom.
    std::string input_volume;
    /// Optional path to a ground-truth volume for evaluation; defaults to the
    /// phantom generated from this config.
    std::string ground_truth;

    uint64_t seed = 0;
    bool deterministic = true;
    int threads = 1;
    std::string output_dir = "runs";

    /// Human-readable validation hints collected while parsing (for example
    /// clinical angles outside the typical acquisition ranges). Never fatal.
    std::vector<std::string> warnings;

    const std::vector<ProjectionGeometry>& active_views() const {
        return selected_views == "orthogonal" ? orthogonal : clinical;
    }

    /// Binarization threshold used for in-loop metric logging: 0.5 when the
    /// configured list contains it, otherwise the middle list entry.
    double primary_threshold() const;

    /// Propagates derived fields (MLP input width, sub-config seeds/grids) and
    /// validates every section. Idempotent; call again after mutating fields.
    void finalize();

    /// Canonical sorted-key JSON of all semantic fields (excludes output_dir,
    /// threads, and warnings). Equal configs produce byte-equal strings.
    std::string canonical_json() const;

    /// 16-hex-digit content ids. Stages share artifacts through these:
    /// phantom_id covers the synthetic volume, data_id additionally covers the
    /// projection geometry and projector settings, run_id the full config.
    std::string phantom_id() const;
    std::string data_id() const;
    std::string run_id() const;

    std::string phantom_dir() const { return output_dir + "/phantom_" + phantom_id(); }
    std::string data_dir() const { return output_dir + "/data_" + data_id(); }
    std::string run_dir() const { return output_dir + "/run_" + run_id(); }
};

/// Parses a JSON run description. Unknown keys are rejected with a
/// nearest-key suggestion, missing required fields and out-of-range values
/// raise ConfigError naming the offending field and constraint. Every field
/// except grid.size and grid.spacing_mm has a documented default.
RunConfig parse_and_validate(const std::string& json_text);

/// parse_and_validate over the contents of `path` (IoError if unreadable).
RunConfig load_run_config(const std::string& path);

}  // namespace vrec
