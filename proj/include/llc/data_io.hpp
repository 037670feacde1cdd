#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "llc/net.hpp"

namespace llc {

/// MNIST IDX pair (big-endian dims, magic 2051 for images / 2049 for
/// labels). Pixel values are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// CSV rows of `label,f1,f2,...` (no header).
Dataset load_csv(const std::string& path);

/// Seeded Gaussian clusters with separable means.
Dataset synth_blobs(std::size_t classes, std::size_t per_class, std::size_t dim,
                    std::uint64_t seed, double separation = 3.0);

/// Model container: magic "LLCM", u32 version, length-prefixed JSON
/// manifest, then little-endian f64 blobs (weight, bias per layer).
/// Round-trips bitwise at 64-bit.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

struct LayerDecision {
    std::size_t layer = 0;       // 1-based, outermost layer is 1
    std::string action;          // "full_precision" | "quantize" | "factor" | "none"
    int bits = 0;                // for quantize
    std::size_t rank = 0;        // for factor
    std::size_t bytes = 0;       // serialized weight bytes after the decision
};

struct CurvePoint {
    double level = 0.0;  // compression level (drop rate or rank fraction)
    double loss = 0.0;
    double top1 = 0.0;
    std::size_t bytes = 0;
};

/// Per-run record comparing original and compressed models. Losses are
/// reported on both the calibration split (the optimized quantity) and the
/// held-out split.
struct Report {
    double original_loss_calib = 0.0;
    double original_loss_holdout = 0.0;
    double original_top1_calib = 0.0;
    double original_top1_holdout = 0.0;
    double compressed_loss_calib = 0.0;
    double compressed_loss_holdout = 0.0;
    double compressed_top1_calib = 0.0;
    double compressed_top1_holdout = 0.0;
    std::size_t original_bytes = 0;
    std::size_t compressed_bytes = 0;
    double drop_rate = 0.0;  // 1 - compressed/original
    std::vector<LayerDecision> decisions;
    std::vector<CurvePoint> curve;
};

std::string report_to_json(const Report& r);
Report report_from_json(const std::string& json_text);

/// Writes the JSON record and a `level,loss,top1,bytes` CSV of curve rows.
/// Empty paths skip the corresponding file.
void emit_report(const Report& r, const std::string& path_json,
                 const std::string& path_csv);

}  // namespace llc
