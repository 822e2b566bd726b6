#pragma once

// Unpaired two-domain dataset: manifest, image decoding/preprocessing,
// identity splits and seed-reproducible per-domain streams.

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace s2p {

/// Decoded 8-bit RGB image, row-major, interleaved.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;
};

/// Throws Dataset on undecodable input. Grayscale files are replicated to RGB.
RawImage decode_image(const std::string& path);

/// Bilinear resize to resolution x resolution, then v / 127.5 - 1. Returns [3, R, R].
torch::Tensor preprocess(const RawImage& image, int64_t resolution, bool flip_horizontal = false);

/// Inverse of the value mapping, clamped and rounded. Accepts [3, H, W] in [-1, 1].
RawImage to_raw_image(const torch::Tensor& chw);

/// Writes an 8-bit RGB PNG. Throws Io on failure.
void write_png(const std::string& path, const RawImage& image);
void write_png(const std::string& path, const torch::Tensor& chw);

struct Landmark {
  double x = 0.0;
  double y = 0.0;
};

/// Identity-level sketch/photo correspondence. Evaluation only.
struct PairingEntry {
  std::string id;
  std::vector<std::string> domain_a_files;  // relative to the manifest root
  std::vector<std::string> domain_b_files;
  std::vector<Landmark> landmarks_a;
  std::vector<Landmark> landmarks_b;
};

struct IdentitySplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Splits identities into disjoint, exhaustive train/test sets. The train
/// count is round(n * train_fraction), kept within [1, n - 1].
/// Throws Domain for a fraction outside (0, 1) and Dataset for < 2 ids.
IdentitySplit split_identities(std::vector<std::string> ids, double train_fraction, uint64_t seed);

/// Marks a region of code (the training loop) in which reading the pairing
/// is a protocol violation.
class UnpairedScope {
 public:
  UnpairedScope();
  ~UnpairedScope();
  UnpairedScope(const UnpairedScope&) = delete;
  UnpairedScope& operator=(const UnpairedScope&) = delete;

  static bool active();
};

class DatasetManifest {
 public:
  static constexpr int kVersion = 1;

  std::string root;  // directory holding domain_a/, domain_b/ and the manifest
  int64_t resolution = 64;
  IdentitySplit split;
  std::string generator_json;  // free-form provenance of synthetic datasets

  /// Throws Protocol inside an UnpairedScope. Every call is counted.
  const std::optional<std::vector<PairingEntry>>& pairing() const;
  void set_pairing(std::optional<std::vector<PairingEntry>> p) { pairing_ = std::move(p); }
  bool has_pairing() const { return pairing_.has_value(); }

  /// Number of pairing() calls made by this process.
  static uint64_t pairing_reads();

  /// Files of one domain ('a' sketches, 'b' photos) for one split ("train"
  /// or "test"), discovered from the directory layout and filtered to the
  /// split's identities, sorted by file name. Both split directories are
  /// searched.
  std::vector<std::string> files(char domain, const std::string& split_name) const;

  /// Throws Dataset when the split sets overlap.
  void validate() const;

  void save(const std::string& path) const;
  /// Throws Io / Dataset. `root` is set to the manifest's directory.
  static DatasetManifest load(const std::string& path);

 private:
  std::optional<std::vector<PairingEntry>> pairing_;
};

/// Identity part of `<identity_id>__<k>.png`.
std::string identity_of(const std::string& filename);

struct StreamOptions {
  int64_t resolution = 64;
  uint64_t seed = 0;
  bool flip = false;
  int workers = 1;
};

/// One domain's images, decoded up front, served in a per-epoch shuffled order
/// that depends only on (seed, domain salt, epoch).
class ImageStream {
 public:
  ImageStream(std::vector<std::string> files, uint64_t salt, const StreamOptions& opts);

  size_t size() const { return images_.size(); }
  size_t skipped() const { return skipped_; }
  const std::vector<std::string>& files() const { return files_; }

  /// Shuffled indices for an epoch (0-based).
  std::vector<size_t> epoch_order(int64_t epoch) const;
  /// Batch `index` of an epoch: [B, 3, R, R].
  torch::Tensor batch(int64_t epoch, size_t index, size_t batch_size) const;
  size_t batches_per_epoch(size_t batch_size) const { return (images_.size() + batch_size - 1) / batch_size; }

  /// The decoded image at position i, unshuffled, unflipped: [3, R, R].
  const torch::Tensor& image(size_t i) const { return images_.at(i); }

 private:
  std::vector<std::string> files_;
  std::vector<torch::Tensor> images_;
  uint64_t salt_;
  StreamOptions opts_;
  size_t skipped_ = 0;
};

struct UnpairedStreams {
  ImageStream a;
  ImageStream b;
};

/// Independent streams over the split's sketches (a) and photos (b). Never
/// touches the pairing. Throws Dataset for an empty domain or when more than
/// 10% of the files fail to decode.
UnpairedStreams load_unpaired(const DatasetManifest& manifest, const std::string& split_name, const StreamOptions& opts);

/// Decodes a list of files in order (parallel when workers > 1).
std::vector<torch::Tensor> load_images(const std::vector<std::string>& files, int64_t resolution, int workers = 1);

}  // namespace s2p
