#include "pyrovis/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "pyrovis/error.hpp"
#include "random.hpp"

namespace pyrovis {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double parse_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    fail(Errc::config, std::string(key) + ": expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

long long parse_int(std::string_view key, std::string_view text) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(Errc::config, std::string(key) + ": expected an integer, got '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_u64(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    fail(Errc::config, std::string(key) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  fail(Errc::config, std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_double(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) fail(Errc::config, std::string(key) + ": empty list");
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += fmt("%.17g", values[i]);
  }
  return s;
}

void require(bool ok, const char* key, const char* what) {
  if (!ok) fail(Errc::config, std::string(key) + " " + what);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

// --- Configuration --------------------------------------------------------------

void PipelineConfig::validate() const {
  try {
    sampling.validate();
    ladder.validate();
    stability.validate();
    kernel.validate();
  } catch (const Error& e) {
    fail(Errc::config, e.what());
  }
  require(encoder_m >= 1, "encoder.m", "must be at least 1");
  require(background.learning_rate > 0.0 && background.learning_rate <= 1.0, "background.learning_rate",
          "must lie in (0, 1]");
  require(background.lambda > 0.0, "background.lambda", "must be positive");
  require(background.std_floor >= 0.0, "background.std_floor", "must be non-negative");
  require(background.warmup_frames >= 0, "background.warmup_frames", "must be non-negative");
  require(stats_window >= 1, "stats_window", "must be at least 1");
  require(min_blob_area >= 0.0, "min_blob_area", "must be non-negative");
  require(tracker.iou_threshold > 0.0 && tracker.iou_threshold <= 1.0, "tracker.iou_threshold", "must lie in (0, 1]");
  require(tracker.max_misses >= 1, "tracker.max_misses", "must be at least 1");
  require(decision_stride >= 1, "decision_stride", "must be at least 1");
  require(region_margin >= 0, "region_margin", "must be non-negative");
  require(codebook_k >= 1, "codebook.k", "must be at least 1");
  require(kmeans_iterations >= 1, "kmeans.iterations", "must be at least 1");
  require(svm_C > 0.0, "svm.C", "must be positive");
  require(cv_folds >= 2, "cv.folds", "must be at least 2");
}

void PipelineConfig::check_files() const {
  for (const auto& [key, path] : {std::pair{"codebook", &codebook_path}, std::pair{"model", &model_path}}) {
    if (!path->empty() && !fs::is_regular_file(*path)) {
      fail(Errc::config, std::string(key) + ": file not found: " + path->string());
    }
  }
}

ProposalConfig PipelineConfig::proposal() const {
  ProposalConfig p;
  p.camera = camera;
  p.ladder = ladder;
  p.background = background;
  p.stats_window = stats_window;
  p.min_blob_area = min_blob_area;
  return p;
}

void set_config_value(PipelineConfig& c, std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  const std::string k(trim(key));
  if (k == "camera") {
    if (v == "static") c.camera = CameraMode::STATIC;
    else if (v == "moving") c.camera = CameraMode::MOVING;
    else fail(Errc::config, "camera: expected static or moving, got '" + std::string(v) + "'");
  } else if (k == "sampling.mode") {
    if (v == "dense") c.sampling.mode = SamplingMode::DENSE;
    else if (v == "keypoint") c.sampling.mode = SamplingMode::KEYPOINT;
    else fail(Errc::config, "sampling.mode: expected dense or keypoint, got '" + std::string(v) + "'");
  } else if (k == "sampling.interval") {
    c.sampling.interval = static_cast<int>(parse_int(k, v));
  } else if (k == "sampling.scales") {
    c.sampling.scales = parse_list(k, v);
  } else if (k == "sampling.hessian_threshold") {
    c.sampling.hessian_threshold = parse_double(k, v);
  } else if (k == "encoder.m") {
    const long long m = parse_int(k, v);
    require(m >= 1, "encoder.m", "must be at least 1");
    c.encoder_m = static_cast<std::size_t>(m);
  } else if (k == "ladder") {
    c.ladder.rungs = parse_list(k, v);
  } else if (k == "stability.preset") {
    const bool literal = c.stability.eq6_literal;
    if (v == "indoor") c.stability = StabilityThresholds::for_environment(Environment::INDOOR);
    else if (v == "outdoor") c.stability = StabilityThresholds::for_environment(Environment::OUTDOOR);
    else fail(Errc::config, "stability.preset: expected indoor or outdoor, got '" + std::string(v) + "'");
    c.stability.eq6_literal = literal;
  } else if (k == "stability.t1") {
    c.stability.t1 = parse_double(k, v);
  } else if (k == "stability.t2") {
    c.stability.t2 = parse_double(k, v);
  } else if (k == "stability.eq6_literal") {
    c.stability.eq6_literal = parse_bool(k, v);
  } else if (k == "background.learning_rate") {
    c.background.learning_rate = parse_double(k, v);
  } else if (k == "background.lambda") {
    c.background.lambda = parse_double(k, v);
  } else if (k == "background.std_floor") {
    c.background.std_floor = parse_double(k, v);
  } else if (k == "background.warmup_frames") {
    c.background.warmup_frames = static_cast<int>(parse_int(k, v));
  } else if (k == "stats_window") {
    const long long n = parse_int(k, v);
    require(n >= 1, "stats_window", "must be at least 1");
    c.stats_window = static_cast<std::size_t>(n);
  } else if (k == "min_blob_area") {
    c.min_blob_area = parse_double(k, v);
  } else if (k == "tracker.iou_threshold") {
    c.tracker.iou_threshold = parse_double(k, v);
  } else if (k == "tracker.max_misses") {
    c.tracker.max_misses = static_cast<int>(parse_int(k, v));
  } else if (k == "decision_stride") {
    c.decision_stride = static_cast<int>(parse_int(k, v));
  } else if (k == "region_margin") {
    c.region_margin = static_cast<int>(parse_int(k, v));
  } else if (k == "codebook") {
    c.codebook_path = fs::path(std::string(v));
  } else if (k == "model") {
    c.model_path = fs::path(std::string(v));
  } else if (k == "seed") {
    c.seed = parse_u64(k, v);
  } else if (k == "codebook.k") {
    const long long n = parse_int(k, v);
    require(n >= 1, "codebook.k", "must be at least 1");
    c.codebook_k = static_cast<std::size_t>(n);
  } else if (k == "kmeans.iterations") {
    c.kmeans_iterations = static_cast<int>(parse_int(k, v));
  } else if (k == "svm.kernel") {
    try {
      c.kernel.kind = parse_kernel_kind(v);
    } catch (const Error& e) {
      fail(Errc::config, e.what());
    }
  } else if (k == "svm.gamma") {
    c.kernel.gamma = parse_double(k, v);
  } else if (k == "svm.C") {
    c.svm_C = parse_double(k, v);
  } else if (k == "svm.balance") {
    c.balance = parse_bool(k, v);
  } else if (k == "cv") {
    c.cross_validate = parse_bool(k, v);
  } else if (k == "cv.folds") {
    c.cv_folds = static_cast<int>(parse_int(k, v));
  } else {
    fail(Errc::config, "unknown configuration key '" + k + "'");
  }
}

PipelineConfig parse_config(std::istream& in, const fs::path& base_dir) {
  PipelineConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) {
      fail(Errc::config, "line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    } catch (const Error& e) {
      fail(Errc::config, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!base_dir.empty()) {
    if (!c.codebook_path.empty() && c.codebook_path.is_relative()) c.codebook_path = base_dir / c.codebook_path;
    if (!c.model_path.empty() && c.model_path.is_relative()) c.model_path = base_dir / c.model_path;
  }
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::config, "cannot open config file " + path.string());
  PipelineConfig c = parse_config(in, path.parent_path());
  c.validate();
  c.check_files();
  return c;
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream o;
  o << "camera = " << (c.camera == CameraMode::STATIC ? "static" : "moving") << '\n';
  o << "sampling.mode = " << (c.sampling.mode == SamplingMode::DENSE ? "dense" : "keypoint") << '\n';
  o << "sampling.interval = " << c.sampling.interval << '\n';
  o << "sampling.scales = " << join(c.sampling.scales) << '\n';
  o << "sampling.hessian_threshold = " << fmt("%.17g", c.sampling.hessian_threshold) << '\n';
  o << "encoder.m = " << c.encoder_m << '\n';
  o << "ladder = " << join(c.ladder.rungs) << '\n';
  o << "stability.preset = " << (c.stability.preset == Environment::INDOOR ? "indoor" : "outdoor") << '\n';
  o << "stability.t1 = " << fmt("%.17g", c.stability.t1) << '\n';
  o << "stability.t2 = " << fmt("%.17g", c.stability.t2) << '\n';
  o << "stability.eq6_literal = " << (c.stability.eq6_literal ? "true" : "false") << '\n';
  o << "background.learning_rate = " << fmt("%.17g", c.background.learning_rate) << '\n';
  o << "background.lambda = " << fmt("%.17g", c.background.lambda) << '\n';
  o << "background.std_floor = " << fmt("%.17g", c.background.std_floor) << '\n';
  o << "background.warmup_frames = " << c.background.warmup_frames << '\n';
  o << "stats_window = " << c.stats_window << '\n';
  o << "min_blob_area = " << fmt("%.17g", c.min_blob_area) << '\n';
  o << "tracker.iou_threshold = " << fmt("%.17g", c.tracker.iou_threshold) << '\n';
  o << "tracker.max_misses = " << c.tracker.max_misses << '\n';
  o << "decision_stride = " << c.decision_stride << '\n';
  o << "region_margin = " << c.region_margin << '\n';
  if (!c.codebook_path.empty()) o << "codebook = " << c.codebook_path.string() << '\n';
  if (!c.model_path.empty()) o << "model = " << c.model_path.string() << '\n';
  o << "seed = " << c.seed << '\n';
  o << "codebook.k = " << c.codebook_k << '\n';
  o << "kmeans.iterations = " << c.kmeans_iterations << '\n';
  o << "svm.kernel = " << to_string(c.kernel.kind) << '\n';
  o << "svm.gamma = " << fmt("%.17g", c.kernel.gamma) << '\n';
  o << "svm.C = " << fmt("%.17g", c.svm_C) << '\n';
  o << "svm.balance = " << (c.balance ? "true" : "false") << '\n';
  o << "cv = " << (c.cross_validate ? "true" : "false") << '\n';
  o << "cv.folds = " << c.cv_folds << '\n';
  return o.str();
}

// --- Region encoding ----------------------------------------------------------

Vocabulary::Vocabulary(Codebook cb)
    : codebook(std::move(cb)), index(pyrovis::index(codebook)), fingerprint(pyrovis::fingerprint(codebook)) {}

BlobFeature encode_patch(const Frame& rgb, const SamplingPlan& plan, const Vocabulary& vocab, std::size_t m) {
  const FeatureFrame ff = FeatureFrame::prepare(rgb);
  const std::vector<LocalDescriptor> descriptors = sample(ff, plan);
  Matrix d(0, kDescriptorDims);
  for (const LocalDescriptor& ld : descriptors) d.append_row(ld.values());
  const GlobalColorHistogram global = global_histogram(ff.lab, ColorSpace::LAB);
  return encode(d, vocab.index, EncoderParams{m, vocab.codebook.sigma}, global.bins);
}

Rect context_region(const Rect& bbox, int margin, int width, int height) {
  const int x0 = std::max(0, bbox.x - margin), y0 = std::max(0, bbox.y - margin);
  const int x1 = std::min(width, bbox.right() + margin), y1 = std::min(height, bbox.bottom() + margin);
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

// --- Detection ------------------------------------------------------------------

Detector::Detector(PipelineConfig config, Codebook codebook, TrainedModel model, std::string video_id)
    : config_(std::move(config)),
      vocab_(std::move(codebook)),
      model_(std::move(model)),
      video_id_(std::move(video_id)),
      proposer_(config_.proposal()),
      tracker_(config_.tracker) {
  config_.validate();
  if (model_.codebook_fingerprint != vocab_.fingerprint) {
    fail(Errc::mismatch, "model was trained against a different codebook");
  }
  if (model_.dim() != vocab_.codebook.k() + kGlobalBins) {
    fail(Errc::mismatch, "model expects " + std::to_string(model_.dim()) + "-dim features, codebook yields " +
                             std::to_string(vocab_.codebook.k() + kGlobalBins));
  }
  if (vocab_.codebook.dim() != static_cast<std::size_t>(kDescriptorDims)) {
    fail(Errc::mismatch, "codebook dimension " + std::to_string(vocab_.codebook.dim()) + " is not " +
                             std::to_string(kDescriptorDims));
  }
  try {
    EncoderParams{config_.encoder_m, vocab_.codebook.sigma}.validate(vocab_.codebook.k());
  } catch (const Error& e) {
    fail(Errc::config, e.what());
  }
}

Detector Detector::from_config(const PipelineConfig& config, std::string video_id) {
  if (config.codebook_path.empty()) fail(Errc::config, "codebook path is not set");
  if (config.model_path.empty()) fail(Errc::config, "model path is not set");
  config.check_files();
  return Detector(config, load_codebook(config.codebook_path), load_model(config.model_path), std::move(video_id));
}

std::vector<AlarmEvent> Detector::process(const Frame& frame) {
  std::vector<AlarmEvent> alarms;
  const std::int64_t index = frame.index();

  auto t0 = Clock::now();
  const Proposal proposal = proposer_.propose(frame);
  timings_.proposal_seconds += seconds_since(t0);
  timings_.blobs += static_cast<long>(proposal.blobs.size());
  if (!mask_dir_.empty()) {
    char name[32];
    std::snprintf(name, sizeof name, "mask_%06lld.pbm", static_cast<long long>(index));
    write_pbm(mask_dir_ / name, proposal.mask.mask);
  }

  t0 = Clock::now();
  const std::vector<int> ids = tracker_.associate(proposal.blobs, index);
  timings_.temporal_seconds += seconds_since(t0);

  if (!proposal.blobs.empty() && processed_ % config_.decision_stride == 0) {
    for (std::size_t b = 0; b < proposal.blobs.size(); ++b) {
      const Rect region = context_region(proposal.blobs[b].bbox, config_.region_margin, frame.width(), frame.height());
      t0 = Clock::now();
      std::optional<BlobFeature> feature;
      try {
        feature = encode_patch(crop(frame, region), config_.sampling, vocab_, config_.encoder_m);
      } catch (const Error& e) {
        if (e.code() != Errc::data) throw;
      }
      timings_.features_seconds += seconds_since(t0);
      if (!feature) continue;

      t0 = Clock::now();
      const Prediction p = predict(model_, *feature, vocab_.fingerprint);
      timings_.classify_seconds += seconds_since(t0);
      ++timings_.classifier_calls;
      BlobTrack* track = tracker_.find(ids[b]);
      track->classified = true;
      track->fire = p.label > 0;
      track->margin = p.margin;
      if (debug_) {
        *debug_ << "classify " << index << ' ' << track->id << ' ' << region.x << ' ' << region.y << ' ' << region.w
                << ' ' << region.h << ' ' << fmt("%.9g", p.margin) << ' ' << (p.label > 0 ? "fire" : "nofire") << '\n';
      }
    }
  }

  t0 = Clock::now();
  for (const int id : ids) {
    BlobTrack* track = tracker_.find(id);
    if (debug_) write_track_log_line(*debug_, index, *track);
    if (track->state != TrackState::PENDING || !track->classified || !track->fire || !track->window_full()) continue;
    const Stability s = stability(*track, config_.stability);
    if (debug_) {
      std::vector<ShapeSample> w(track->window.begin(), track->window.end());
      const WindowStats st = window_stats(w);
      *debug_ << "verdict " << index << ' ' << track->id << ' ' << to_string(s) << ' ' << fmt("%.9g", st.mu_p) << ' '
              << fmt("%.9g", st.mu_a) << ' ' << fmt("%.9g", st.sigma_p) << ' ' << fmt("%.9g", st.sigma_a) << ' '
              << fmt("%.9g", st.sigma_d) << '\n';
    }
    if (verdict(*track, s)) {
      alarms.push_back({video_id_, index, track->id, track->bbox, track->margin});
    }
  }
  timings_.temporal_seconds += seconds_since(t0);

  ++processed_;
  ++timings_.frames;
  timings_.alarms += static_cast<long>(alarms.size());
  return alarms;
}

std::vector<AlarmEvent> detect_stream(const fs::path& dir, const PipelineConfig& config, const std::string& video_id,
                                      std::ostream* warnings, StageTimings* timings, std::ostream* debug,
                                      const fs::path& mask_dir) {
  Detector detector = Detector::from_config(config, video_id);
  detector.set_debug_log(debug);
  if (!mask_dir.empty()) {
    fs::create_directories(mask_dir);
    detector.set_mask_dir(mask_dir);
  }
  std::vector<AlarmEvent> alarms;
  int width = -1, height = -1;
  for (const FrameFile& f : list_frame_files(dir)) {
    Frame frame;
    try {
      frame = read_ppm(f.path, f.index);
    } catch (const Error& e) {
      if (warnings) *warnings << "warning: skipping frame " << f.path.string() << ": " << e.what() << '\n';
      continue;
    }
    if (width < 0) {
      width = frame.width();
      height = frame.height();
    } else if (frame.width() != width || frame.height() != height) {
      if (warnings) *warnings << "warning: skipping frame " << f.path.string() << ": size differs from the stream\n";
      continue;
    }
    for (AlarmEvent& a : detector.process(frame)) alarms.push_back(std::move(a));
  }
  if (timings) *timings = detector.timings();
  return alarms;
}

void write_alarm(std::ostream& out, const AlarmEvent& a) {
  out << a.video_id << ' ' << a.frame_index << ' ' << a.track_id << ' ' << a.bbox.x << ' ' << a.bbox.y << ' '
      << a.bbox.w << ' ' << a.bbox.h << ' ' << fmt("%.9g", a.margin) << '\n';
}

std::vector<AlarmEvent> read_alarm_log(std::istream& in) {
  std::vector<AlarmEvent> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    std::istringstream ls{std::string(s)};
    AlarmEvent a;
    std::string margin;
    if (!(ls >> a.video_id >> a.frame_index >> a.track_id >> a.bbox.x >> a.bbox.y >> a.bbox.w >> a.bbox.h >> margin)) {
      fail(Errc::data, "alarm log line " + std::to_string(lineno) + ": expected 8 fields");
    }
    try {
      a.margin = parse_double("margin", margin);
    } catch (const Error&) {
      fail(Errc::data, "alarm log line " + std::to_string(lineno) + ": bad margin '" + margin + "'");
    }
    out.push_back(std::move(a));
  }
  return out;
}

void write_timings(std::ostream& out, const StageTimings& t) {
  const double total = t.total_seconds();
  out << "frames " << t.frames << '\n';
  out << "blobs " << t.blobs << '\n';
  out << "classifier_calls " << t.classifier_calls << '\n';
  out << "alarms " << t.alarms << '\n';
  out << "proposal_s " << fmt("%.6f", t.proposal_seconds) << '\n';
  out << "features_s " << fmt("%.6f", t.features_seconds) << '\n';
  out << "classify_s " << fmt("%.6f", t.classify_seconds) << '\n';
  out << "temporal_s " << fmt("%.6f", t.temporal_seconds) << '\n';
  out << "fps " << (total > 0.0 ? fmt("%.1f", static_cast<double>(t.frames) / total) : std::string("inf")) << '\n';
}

// --- Training -------------------------------------------------------------------

std::vector<fs::path> list_patch_files(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(Errc::io, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Frame> load_patches(const fs::path& dir) {
  std::vector<Frame> out;
  for (const fs::path& p : list_patch_files(dir)) out.push_back(read_ppm(p));
  return out;
}

CodebookTraining train_codebook(std::span<const Frame> patches, const SamplingPlan& plan, std::size_t k,
                                int iterations, std::uint64_t seed) {
  plan.validate();
  if (patches.empty()) fail(Errc::data, "no training patches");
  Matrix points(0, kDescriptorDims);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    std::vector<LocalDescriptor> ds;
    try {
      ds = sample(patches[i], plan);
    } catch (const Error& e) {
      fail(e.code(), "patch " + std::to_string(i) + ": " + e.what());
    }
    for (const LocalDescriptor& d : ds) points.append_row(d.values());
  }
  std::set<std::vector<double>> distinct;
  for (std::size_t r = 0; r < points.rows() && distinct.size() < k; ++r) {
    distinct.emplace(points.row(r).begin(), points.row(r).end());
  }
  if (distinct.size() < k) {
    fail(Errc::data, "insufficient descriptors: " + std::to_string(points.rows()) + " descriptors (" +
                         std::to_string(distinct.size()) + " distinct) from " + std::to_string(patches.size()) +
                         " patches, k = " + std::to_string(k));
  }
  KMeansResult km = kmeans(points, k, iterations, seed);
  CodebookTraining out;
  out.codebook = std::move(km.codebook);
  out.codebook.trained_descriptors = points.rows();
  out.patches = patches.size();
  out.descriptors = points.rows();
  out.sse_trace = std::move(km.sse_trace);
  return out;
}

TrainTestSplit split_train_test(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  detail::Rng rng(seed);
  rng.shuffle(perm.begin(), perm.end());
  const std::size_t test = n == 0 ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n / 5.0)));
  TrainTestSplit s;
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test), perm.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

ModelTraining train_model(std::span<const BlobFeature> fire, std::span<const BlobFeature> nonfire,
                          const Fingerprint& codebook_fingerprint, const PipelineConfig& config) {
  config.validate();
  if (fire.size() < 5 || nonfire.size() < 5) {
    fail(Errc::data, "need at least 5 patches per class (fire " + std::to_string(fire.size()) + ", non-fire " +
                         std::to_string(nonfire.size()) + ")");
  }
  const TrainTestSplit fs_ = split_train_test(fire.size(), detail::derive_seed(config.seed, 1));
  const TrainTestSplit ns = split_train_test(nonfire.size(), detail::derive_seed(config.seed, 2));

  std::vector<LabeledSample> train_set, test_set;
  for (std::size_t i : fs_.train) train_set.push_back({fire[i].combined(), 1});
  for (std::size_t i : ns.train) train_set.push_back({nonfire[i].combined(), -1});
  for (std::size_t i : fs_.test) test_set.push_back({fire[i].combined(), 1});
  for (std::size_t i : ns.test) test_set.push_back({nonfire[i].combined(), -1});

  ModelTraining out;
  Kernel kernel = config.kernel;
  double C = config.svm_C;
  if (config.cross_validate) {
    out.cv = cross_validate(train_set, kernel.kind, config.cv_folds, CVGrid::powers_of_two(),
                            detail::derive_seed(config.seed, 3), config.balance);
    C = out.cv->best_C;
    if (kernel.kind != KernelKind::LINEAR) kernel.gamma = out.cv->best_gamma;
  }
  TrainOptions opts;
  opts.C = C;
  opts.balance = config.balance;
  out.model = train(train_set, kernel, opts).model;
  out.model.codebook_fingerprint = codebook_fingerprint;
  out.train_fire = fs_.train.size();
  out.train_nonfire = ns.train.size();
  out.test_fire = fs_.test.size();
  out.test_nonfire = ns.test.size();
  for (const LabeledSample& s : test_set) {
    if (out.model.predict(s.x).label == s.label) ++out.test_correct;
  }
  out.held_out_accuracy = static_cast<double>(out.test_correct) / static_cast<double>(test_set.size());
  return out;
}

ModelTraining train_model(std::span<const Frame> fire, std::span<const Frame> nonfire, const Vocabulary& vocab,
                          const PipelineConfig& config, std::span<const std::string> fire_names,
                          std::span<const std::string> nonfire_names) {
  std::vector<std::string> failures;
  auto encode_all = [&](std::span<const Frame> patches, std::span<const std::string> names, const char* group) {
    std::vector<BlobFeature> out;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      try {
        out.push_back(encode_patch(patches[i], config.sampling, vocab, config.encoder_m));
      } catch (const Error& e) {
        const std::string name = i < names.size() ? names[i] : std::string(group) + " patch " + std::to_string(i);
        failures.push_back(name + ": " + e.what());
      }
    }
    return out;
  };
  const std::vector<BlobFeature> f = encode_all(fire, fire_names, "fire");
  const std::vector<BlobFeature> n = encode_all(nonfire, nonfire_names, "non-fire");
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) + " patch(es) failed to encode:";
    for (const std::string& s : failures) msg += "\n  " + s;
    fail(Errc::data, msg);
  }
  return train_model(f, n, vocab.fingerprint, config);
}

// --- Evaluation -----------------------------------------------------------------

void validate_labels(std::span<const SectionLabel> labels) {
  std::map<std::string, std::vector<const SectionLabel*>> by_video;
  for (const SectionLabel& l : labels) {
    if (l.start < 0 || l.end <= l.start) {
      fail(Errc::data, "section " + l.video_id + " [" + std::to_string(l.start) + ", " + std::to_string(l.end) +
                           "): empty or negative range");
    }
    if (l.end - l.start > kSectionLength) {
      fail(Errc::data, "section " + l.video_id + " [" + std::to_string(l.start) + ", " + std::to_string(l.end) +
                           ") is longer than " + std::to_string(kSectionLength) + " frames");
    }
    by_video[l.video_id].push_back(&l);
  }
  for (auto& [video, secs] : by_video) {
    std::sort(secs.begin(), secs.end(), [](const SectionLabel* a, const SectionLabel* b) { return a->start < b->start; });
    for (std::size_t i = 0; i + 1 < secs.size(); ++i) {
      if (secs[i]->end > secs[i + 1]->start) {
        fail(Errc::data, "sections of " + video + " overlap at frame " + std::to_string(secs[i + 1]->start));
      }
      if (secs[i]->end - secs[i]->start != kSectionLength) {
        fail(Errc::data, "section " + video + " [" + std::to_string(secs[i]->start) + ", " +
                             std::to_string(secs[i]->end) + ") is short but not the last of its video");
      }
    }
  }
}

std::vector<SectionLabel> read_labels(std::istream& in) {
  std::vector<SectionLabel> out;
  std::map<std::string, int> counts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    std::istringstream ls{std::string(s)};
    SectionLabel l;
    std::string truth, extra;
    if (!(ls >> l.video_id >> l.start >> l.end >> truth) || (ls >> extra)) {
      fail(Errc::data, "labels line " + std::to_string(lineno) + ": expected `video_id start end fire|nofire`");
    }
    if (truth == "fire") l.fire = true;
    else if (truth == "nofire") l.fire = false;
    else fail(Errc::data, "labels line " + std::to_string(lineno) + ": truth must be fire or nofire");
    out.push_back(std::move(l));
  }
  // Section numbers follow frame order within each video.
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return out[a].start < out[b].start; });
  for (std::size_t i : order) out[i].section = counts[out[i].video_id]++;
  validate_labels(out);
  return out;
}

std::vector<SectionLabel> load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open labels file " + path.string());
  return read_labels(in);
}

EvalReport report_from_counts(long tp, long tn, long fp, long fn) {
  EvalReport r;
  r.tp = tp;
  r.tn = tn;
  r.fp = fp;
  r.fn = fn;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return r;
}

EvalReport evaluate_alarms(std::span<const AlarmEvent> alarms, std::span<const SectionLabel> labels) {
  validate_labels(labels);
  std::vector<SectionVerdict> verdicts;
  for (const SectionLabel& l : labels) verdicts.push_back({l, false, 0});
  for (const AlarmEvent& a : alarms) {
    auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const SectionVerdict& v) {
      return v.label.video_id == a.video_id && a.frame_index >= v.label.start && a.frame_index < v.label.end;
    });
    if (it == verdicts.end()) {
      fail(Errc::mismatch, "alarm at " + a.video_id + " frame " + std::to_string(a.frame_index) +
                               " falls outside every labelled section");
    }
    ++it->alarms;
    it->predicted_fire = true;
  }
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (const SectionVerdict& v : verdicts) {
    if (v.label.fire) (v.predicted_fire ? tp : fn)++;
    else (v.predicted_fire ? fp : tn)++;
  }
  EvalReport r = report_from_counts(tp, tn, fp, fn);
  r.sections = std::move(verdicts);
  return r;
}

EvalReport evaluate(const fs::path& root, const PipelineConfig& config, std::span<const SectionLabel> labels,
                    std::ostream* warnings, std::vector<AlarmEvent>* alarms_out) {
  validate_labels(labels);
  std::vector<std::string> videos;
  for (const SectionLabel& l : labels) {
    if (std::find(videos.begin(), videos.end(), l.video_id) == videos.end()) videos.push_back(l.video_id);
  }
  std::vector<AlarmEvent> alarms;
  for (const std::string& video : videos) {
    const fs::path dir = root / video;
    if (!fs::is_directory(dir)) fail(Errc::data, "labelled video " + video + " has no directory under " + root.string());
    const std::vector<FrameFile> frames = list_frame_files(dir);
    if (frames.empty()) fail(Errc::data, "video " + video + " has no frames");
    auto covered = [&](std::int64_t f) {
      return std::any_of(labels.begin(), labels.end(),
                         [&](const SectionLabel& l) { return l.video_id == video && f >= l.start && f < l.end; });
    };
    for (const FrameFile& f : frames) {
      if (!covered(f.index)) {
        fail(Errc::data, "label/frame-range mismatch: " + video + " frame " + std::to_string(f.index) +
                             " is not covered by any section");
      }
    }
    for (const SectionLabel& l : labels) {
      if (l.video_id == video && (l.start < frames.front().index || l.end > frames.back().index + 1)) {
        fail(Errc::data, "label/frame-range mismatch: " + video + " section [" + std::to_string(l.start) + ", " +
                             std::to_string(l.end) + ") extends beyond frames " +
                             std::to_string(frames.front().index) + ".." + std::to_string(frames.back().index));
      }
    }
    for (AlarmEvent& a : detect_stream(dir, config, video, warnings)) alarms.push_back(std::move(a));
  }
  EvalReport r = evaluate_alarms(alarms, labels);
  if (alarms_out) *alarms_out = std::move(alarms);
  return r;
}

std::string format_rate(const std::optional<double>& rate) {
  if (!rate) return "n/a";
  return fmt("%.2f%%", 100.0 * *rate);
}

void write_report(std::ostream& out, const EvalReport& r) {
  char buf[128];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-16s %s\n", name, value.c_str());
    out << buf;
  };
  row("True positive", std::to_string(r.tp));
  row("True negative", std::to_string(r.tn));
  row("False positive", std::to_string(r.fp));
  row("False negative", std::to_string(r.fn));
  row("Precision rate", format_rate(r.precision));
  row("Recall rate", format_rate(r.recall));
  if (r.sections.empty()) return;
  out << "\nvideo section start end truth predicted alarms\n";
  for (const SectionVerdict& v : r.sections) {
    out << v.label.video_id << ' ' << v.label.section << ' ' << v.label.start << ' ' << v.label.end << ' '
        << (v.label.fire ? "fire" : "nofire") << ' ' << (v.predicted_fire ? "fire" : "nofire") << ' ' << v.alarms
        << '\n';
  }
}

}  // namespace pyrovis
