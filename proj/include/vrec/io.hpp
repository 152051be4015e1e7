#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vrec/common.hpp"
#include "vrec/field.hpp"
#include "vrec/projector.hpp"
#include "vrec/trainer.hpp"
#include "vrec/volume.hpp"

namespace vrec {

/// Payload element type of a volume file. Binary volumes may be stored as
/// uint8 (one byte per voxel, values 0/1); continuous volumes are float32.
enum class VolumeDtype { float32, uint8 };

/// Write `vol` as a raw little-endian payload at `path` plus a JSON sidecar
/// at `path + ".json"` describing dimensions, spacing, value kind, dtype, and
/// format version. uint8 requires a binary volume.
void save_volume(const std::string& path, const VolumeGrid& vol,
                 VolumeDtype dtype = VolumeDtype::float32);

/// Read a volume written by save_volume. Validates the sidecar (version,
/// dimensions, spacing, dtype) and the payload length against it; any
/// inconsistency raises IoError naming the offending field.
VolumeGrid load_volume(const std::string& path);

/// Write one projection as raw little-endian float32 at `path` plus a JSON
/// sidecar at `path + ".json"` recording the full view geometry.
void save_projection(const std::string& path, const ProjectionImage& img);

/// Read a projection written by save_projection; round-trips bitwise.
ProjectionImage load_projection(const std::string& path);

/// Export a projection as a lossless 16-bit grayscale PNG for visual
/// inspection. Values are min-max scaled to [0, 65535]; the scaling is
/// recorded in a JSON sidecar at `path + ".json"`. A constant image maps to
/// all zeros.
void write_projection_png(const std::string& path, const ProjectionImage& img);

/// Decoded 16-bit grayscale PNG, row-major. Inspection/test helper for
/// write_projection_png output.
struct Png16 {
    int width = 0, height = 0;
    std::vector<uint16_t> pixels;
};
Png16 read_png16(const std::string& path);

/// Encoder-table checkpoint: binary little-endian float32 with a header
/// recording the full encoder configuration and a format-version tag.
void save_theta(const std::string& path, const HashEncoderConfig& cfg,
                const HashEncoderParams<float>& params);
std::pair<HashEncoderConfig, HashEncoderParams<float>> load_theta(const std::string& path);

/// MLP weight checkpoint: binary little-endian float32 with a per-layer
/// shape manifest.
void save_phi(const std::string& path, const MlpParams<float>& params);
MlpParams<float> load_phi(const std::string& path);

/// Everything needed to resume an optimization bitwise: iteration counter,
/// field parameters, and optimizer moments.
struct TrainSnapshot {
    int64_t iteration = 0;
    FieldParams<float> params;
    AdamState adam;
};

/// Combined snapshot file (encoder tables, MLP weights, Adam state). Loading
/// validates every shape against `spec`; a resumed run continues bitwise
/// identically to an uninterrupted one in deterministic mode.
void save_snapshot(const std::string& path, const FieldSpec& spec, const TrainSnapshot& snap);
TrainSnapshot load_snapshot(const std::string& path, const FieldSpec& spec);

/// Read-only import of standard medical volumes for user-supplied data:
/// NIfTI-1 (.nii, .nii.gz) and NRRD (.nrrd, attached payload). Axis order is
/// remapped to x-fastest when the header declares a permutation; exotic
/// headers (nonscalar data, detached payloads, non-axis-aligned orientations,
/// unusual dtypes) are rejected with IoError.
VolumeGrid import_medical_volume(const std::string& path);

/// Simulate the complete measurement input of the reconstruction pipeline:
/// project `vol` through both geometries and write each projection (raw +
/// sidecar + PNG) into `out_dir` as view_0.*, view_1.*. Returns the images.
std::vector<ProjectionImage> simulate_inputs(const VolumeGrid& vol,
                                             const std::vector<ProjectionGeometry>& geoms,
                                             const ProjectorConfig& cfg,
                                             const std::string& out_dir);

}  // namespace vrec
