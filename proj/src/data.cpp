#include "s2p/data.hpp"

#include "s2p/error.hpp"
#include "s2p/log.hpp"
#include "s2p/random.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace s2p {

// -- images ------------------------------------------------------------------

RawImage decode_image(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) fail(ErrorKind::Dataset, "cannot decode image " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RawImage out;
  out.width = rgb.cols;
  out.height = rgb.rows;
  out.rgb.resize(static_cast<size_t>(rgb.cols) * rgb.rows * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    std::copy_n(rgb.ptr<uint8_t>(y), rgb.cols * 3, out.rgb.data() + static_cast<size_t>(y) * rgb.cols * 3);
  }
  return out;
}

torch::Tensor preprocess(const RawImage& image, int64_t resolution, bool flip_horizontal) {
  require(image.width > 0 && image.height > 0 &&
              image.rgb.size() == static_cast<size_t>(image.width) * image.height * 3,
          ErrorKind::Dataset, "preprocess: malformed image buffer");
  require(resolution > 0, ErrorKind::Config, "preprocess: resolution must be positive");
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<uint8_t*>(image.rgb.data()));
  cv::Mat resized;
  const int r = static_cast<int>(resolution);
  if (src.cols == r && src.rows == r) {
    resized = src.clone();
  } else {
    cv::resize(src, resized, cv::Size(r, r), 0, 0, cv::INTER_LINEAR);
  }
  if (flip_horizontal) cv::flip(resized, resized, 1);
  auto hwc = torch::from_blob(resized.data, {r, r, 3}, torch::kUInt8).to(torch::kFloat32);
  return (hwc / 127.5 - 1.0).permute({2, 0, 1}).contiguous();
}

RawImage to_raw_image(const torch::Tensor& chw) {
  require(chw.dim() == 3 && chw.size(0) == 3, ErrorKind::Dimension, "to_raw_image expects [3, H, W]");
  auto hwc = ((chw.detach().to(torch::kCPU, torch::kFloat32).clamp(-1.0, 1.0) + 1.0) * 127.5)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  RawImage out;
  out.height = static_cast<int>(hwc.size(0));
  out.width = static_cast<int>(hwc.size(1));
  out.rgb.assign(hwc.data_ptr<uint8_t>(), hwc.data_ptr<uint8_t>() + hwc.numel());
  return out;
}

void write_png(const std::string& path, const RawImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3, const_cast<uint8_t*>(image.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  bool ok = false;
  try {
    ok = cv::imwrite(path, bgr);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::Io, "cannot write " + path + ": " + e.what());
  }
  require(ok, ErrorKind::Io, "cannot write " + path);
}

void write_png(const std::string& path, const torch::Tensor& chw) { write_png(path, to_raw_image(chw)); }

// -- splits ------------------------------------------------------------------

IdentitySplit split_identities(std::vector<std::string> ids, double train_fraction, uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::Domain,
          "train_fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  require(ids.size() >= 2, ErrorKind::Dataset, "need >= 2 identities to split");
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), ErrorKind::Dataset, "duplicate identity ids");
  const auto n = static_cast<int64_t>(ids.size());
  const int64_t n_train = std::clamp<int64_t>(std::llround(static_cast<double>(n) * train_fraction), 1, n - 1);
  Rng rng(mix_seed(seed, 0x5b11));
  rng.shuffle(std::span<std::string>(ids));
  IdentitySplit out;
  out.train.assign(ids.begin(), ids.begin() + n_train);
  out.test.assign(ids.begin() + n_train, ids.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

// -- manifest ----------------------------------------------------------------

namespace {

thread_local int g_unpaired_depth = 0;
std::atomic<uint64_t> g_pairing_reads{0};

const char* domain_dir(char domain) {
  switch (domain) {
    case 'a': return "domain_a";
    case 'b': return "domain_b";
  }
  fail(ErrorKind::Usage, std::string("unknown domain '") + domain + "'");
}

json landmarks_to_json(const std::vector<Landmark>& lms) {
  json arr = json::array();
  for (const auto& l : lms) arr.push_back({l.x, l.y});
  return arr;
}

std::vector<Landmark> landmarks_from_json(const json& j) {
  std::vector<Landmark> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

}  // namespace

UnpairedScope::UnpairedScope() { ++g_unpaired_depth; }
UnpairedScope::~UnpairedScope() { --g_unpaired_depth; }
bool UnpairedScope::active() { return g_unpaired_depth > 0; }

const std::optional<std::vector<PairingEntry>>& DatasetManifest::pairing() const {
  ++g_pairing_reads;
  require(!UnpairedScope::active(), ErrorKind::Protocol, "identity pairing read inside the unpaired training loop");
  return pairing_;
}

uint64_t DatasetManifest::pairing_reads() { return g_pairing_reads.load(); }

std::string identity_of(const std::string& filename) {
  const std::string stem = fs::path(filename).stem().string();
  const auto pos = stem.find("__");
  return pos == std::string::npos ? stem : stem.substr(0, pos);
}

std::vector<std::string> DatasetManifest::files(char domain, const std::string& split_name) const {
  require(split_name == "train" || split_name == "test", ErrorKind::Usage, "split must be train or test");
  const auto& ids = split_name == "train" ? split.train : split.test;
  const std::set<std::string> wanted(ids.begin(), ids.end());
  // Identities may sit under either directory after a re-split, so both are
  // scanned and the split ids decide membership.
  std::vector<std::string> out;
  for (const char* sub : {"train", "test"}) {
    const fs::path dir = fs::path(root) / domain_dir(domain) / sub;
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) continue;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const auto& p = entry.path();
      if (p.extension() != ".png") continue;
      if (wanted.count(identity_of(p.filename().string())) == 0) continue;
      out.push_back(p.string());
    }
  }
  std::sort(out.begin(), out.end(), [](const std::string& l, const std::string& r) {
    return fs::path(l).filename() < fs::path(r).filename();
  });
  return out;
}

void DatasetManifest::validate() const {
  std::set<std::string> train(split.train.begin(), split.train.end());
  for (const auto& id : split.test) {
    require(train.count(id) == 0, ErrorKind::Dataset, "identity " + id + " is in both train and test splits");
  }
  require(resolution > 0, ErrorKind::Dataset, "manifest resolution must be positive");
}

void DatasetManifest::save(const std::string& path) const {
  json j;
  j["version"] = kVersion;
  j["resolution"] = resolution;
  j["domains"] = {{"a", "domain_a"}, {"b", "domain_b"}};
  j["splits"] = {{"train", split.train}, {"test", split.test}};
  if (pairing_) {
    json arr = json::array();
    for (const auto& e : *pairing_) {
      arr.push_back({{"id", e.id},
                     {"a", e.domain_a_files},
                     {"b", e.domain_b_files},
                     {"landmarks_a", landmarks_to_json(e.landmarks_a)},
                     {"landmarks_b", landmarks_to_json(e.landmarks_b)}});
    }
    j["pairing"] = std::move(arr);
  }
  if (!generator_json.empty()) j["generator"] = json::parse(generator_json);
  const fs::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path);
  out << j.dump(2) << "\n";
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path);
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open manifest " + path);
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    const int version = j.at("version").get<int>();
    require(version == kVersion, ErrorKind::Dataset, "unsupported manifest version " + std::to_string(version));
    m.resolution = j.at("resolution").get<int64_t>();
    m.split.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.split.test = j.at("splits").at("test").get<std::vector<std::string>>();
    if (j.contains("pairing")) {
      std::vector<PairingEntry> entries;
      for (const auto& e : j.at("pairing")) {
        PairingEntry p;
        p.id = e.at("id").get<std::string>();
        p.domain_a_files = e.at("a").get<std::vector<std::string>>();
        p.domain_b_files = e.at("b").get<std::vector<std::string>>();
        if (e.contains("landmarks_a")) p.landmarks_a = landmarks_from_json(e.at("landmarks_a"));
        if (e.contains("landmarks_b")) p.landmarks_b = landmarks_from_json(e.at("landmarks_b"));
        entries.push_back(std::move(p));
      }
      m.pairing_ = std::move(entries);
    }
    if (j.contains("generator")) m.generator_json = j.at("generator").dump();
  } catch (const json::exception& e) {
    fail(ErrorKind::Dataset, "malformed manifest " + path + ": " + e.what());
  }
  m.root = fs::absolute(fs::path(path)).parent_path().string();
  m.validate();
  return m;
}

// -- streams -----------------------------------------------------------------

std::vector<torch::Tensor> load_images(const std::vector<std::string>& files, int64_t resolution, int workers) {
  std::vector<torch::Tensor> out(files.size());
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < files.size(); i += stride) {
      try {
        out[i] = preprocess(decode_image(files[i]), resolution);
      } catch (const Error& e) {
        log_warning(e.what());
      }
    }
  };
  const auto n_workers = static_cast<size_t>(std::max(1, workers));
  if (n_workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::future<void>> jobs;
    for (size_t w = 0; w < n_workers; ++w) jobs.push_back(std::async(std::launch::async, work, w, n_workers));
    for (auto& j : jobs) j.get();
  }
  return out;
}

ImageStream::ImageStream(std::vector<std::string> files, uint64_t salt, const StreamOptions& opts)
    : salt_(salt), opts_(opts) {
  require(!files.empty(), ErrorKind::Dataset, "empty image domain");
  auto decoded = load_images(files, opts.resolution, opts.workers);
  for (size_t i = 0; i < files.size(); ++i) {
    if (!decoded[i].defined()) {
      ++skipped_;
      continue;
    }
    files_.push_back(files[i]);
    images_.push_back(std::move(decoded[i]));
  }
  if (skipped_ * 10 > files.size()) {
    fail(ErrorKind::Dataset, std::to_string(skipped_) + " of " + std::to_string(files.size()) +
                                 " images failed to decode (more than 10%)");
  }
  require(!images_.empty(), ErrorKind::Dataset, "no decodable images in domain");
}

std::vector<size_t> ImageStream::epoch_order(int64_t epoch) const {
  std::vector<size_t> order(images_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(mix_seed(opts_.seed, salt_), static_cast<uint64_t>(epoch)));
  rng.shuffle(std::span<size_t>(order));
  return order;
}

torch::Tensor ImageStream::batch(int64_t epoch, size_t index, size_t batch_size) const {
  const auto order = epoch_order(epoch);
  const size_t begin = index * batch_size;
  require(begin < order.size(), ErrorKind::Usage, "batch index past the end of the epoch");
  const size_t end = std::min(order.size(), begin + batch_size);
  std::vector<torch::Tensor> items;
  Rng flip_rng(mix_seed(mix_seed(opts_.seed, salt_ ^ 0xf11bULL), static_cast<uint64_t>(epoch)));
  std::vector<bool> flips(order.size());
  for (size_t i = 0; i < order.size(); ++i) flips[i] = opts_.flip && flip_rng.coin();
  for (size_t i = begin; i < end; ++i) {
    const auto& img = images_[order[i]];
    items.push_back(flips[i] ? img.flip({2}) : img);
  }
  return torch::stack(items);
}

UnpairedStreams load_unpaired(const DatasetManifest& manifest, const std::string& split_name,
                              const StreamOptions& opts) {
  auto files_a = manifest.files('a', split_name);
  auto files_b = manifest.files('b', split_name);
  require(!files_a.empty(), ErrorKind::Dataset, "domain_a/" + split_name + " holds no images under " + manifest.root);
  require(!files_b.empty(), ErrorKind::Dataset, "domain_b/" + split_name + " holds no images under " + manifest.root);
  return {ImageStream(std::move(files_a), 0xa, opts), ImageStream(std::move(files_b), 0xb, opts)};
}

}  // namespace s2p
