#pragma once

// Procedural sketch/photo faces. Each identity is a fixed set of facial
// geometry and colour attributes drawn from its seed; the photo is a shaded
// colour rendering and the sketch a grayscale stroke rendering whose feature
// positions are displaced by the geometry jitter.

#include "s2p/data.hpp"
#include "s2p/loss_network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace s2p {

enum class StrokeStyle { Pencil, Charcoal, Pen };

const char* to_string(StrokeStyle s);
StrokeStyle parse_stroke_style(const std::string& s);

struct SyntheticFaceParams {
  uint64_t identity_seed = 0;
  /// Landmark displacement of the sketch as a fraction of the image size.
  double geometry_jitter = 0.05;
  StrokeStyle texture_style = StrokeStyle::Pencil;
};

/// Landmark order of FaceRender::landmarks.
enum LandmarkIndex : int {
  kHeadCenter,
  kLeftEye,
  kRightEye,
  kLeftBrow,
  kRightBrow,
  kNoseTip,
  kMouth,
  kChin,
  kLandmarkCount,
};

struct FaceRender {
  RawImage image;
  std::vector<Landmark> landmarks;  // pixel coordinates
};

/// `variant` 0 is the canonical render; higher variants perturb lighting,
/// framing and exposure a little but keep the identity.
FaceRender render_photo(const SyntheticFaceParams& params, int resolution, int variant = 0);
FaceRender render_sketch(const SyntheticFaceParams& params, int resolution, int variant = 0);

/// Mean landmark distance between two renders, in units of the image size.
double landmark_alignment_error(const std::vector<Landmark>& a, const std::vector<Landmark>& b, int resolution);

struct SyntheticDatasetOptions {
  int64_t n_identities = 123;
  double train_fraction = 100.0 / 123.0;
  uint64_t seed = 1;
  int64_t resolution = 64;
  double geometry_jitter = 0.05;
  StrokeStyle texture_style = StrokeStyle::Pencil;
  int renders_per_identity = 1;
};

/// identity_seed of the i-th identity of a dataset.
uint64_t synthetic_identity_seed(uint64_t dataset_seed, int64_t index);
std::string synthetic_identity_id(int64_t index);

/// Writes `<out>/{domain_a,domain_b}/{train,test}/<id>__<k>.png` and
/// `<out>/manifest.json`; returns the manifest (root = out_dir).
/// Throws Usage for fewer than 2 identities, Io when out_dir is unwritable.
DatasetManifest generate_synthetic_dataset(const SyntheticDatasetOptions& opts, const std::string& out_dir);

struct IdentitySetOptions {
  int64_t n_identities = 150;
  int train_renders = 6;
  int held_out_renders = 2;
  int64_t resolution = 64;
  /// Offset so the classifier population is disjoint from dataset identities.
  uint64_t seed = 0x9e7f;
};

/// Photo renders labelled by identity for training the SyntheticTrained loss
/// network. Held-out renders use variants never seen in training.
IdentityTrainingSet make_identity_training_set(const IdentitySetOptions& opts);

}  // namespace s2p
