// Copyright 2026 The HMG Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hmg/dataset/dataset.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "hmg/common/error.h"
#include "hmg/common/hash.h"

namespace hmg::dataset {
namespace {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "episode files assume a little-endian host");

constexpr char kMagic[4] = {'H', 'M', 'G', 'E'};
constexpr uint32_t kEpisodeVersion = 1;
constexpr uint32_t kFallFlag = 1;

struct Header {
  char magic[4];
  uint32_t version;
  uint32_t length;
  uint32_t d_obs;
  uint32_t d_act;
  uint32_t flags;
  uint64_t seed;
};
static_assert(sizeof(Header) == 32);

std::function<void()>& FaultHook() {
  static std::function<void()> hook;
  return hook;
}

// Exclusive advisory lock on <dir>/lock for the lifetime of the object.
class WriterLock {
 public:
  explicit WriterLock(const fs::path& dir) {
    const fs::path p = dir / "lock";
    fd_ = ::open(p.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error(ErrorKind::kIo, "cannot open lock file " + p.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::kIo, "cannot lock " + p.string());
    }
  }
  ~WriterLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  WriterLock(const WriterLock&) = delete;
  WriterLock& operator=(const WriterLock&) = delete;

 private:
  int fd_ = -1;
};

void WriteFloats(std::ofstream& out, const std::vector<double>& v) {
  std::vector<float> buf(v.begin(), v.end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void ReadFloats(std::ifstream& in, std::vector<double>& v, size_t n,
                const fs::path& path, const char* what) {
  std::vector<float> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) {
    throw Error(ErrorKind::kTruncated, path.string() + ": truncated " + what + " block");
  }
  v.assign(buf.begin(), buf.end());
}

void AtomicWriteText(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json StatsToJson(const DimStats& s) {
  return {{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"std", s.std}};
}

DimStats StatsFromJson(const nlohmann::json& j) {
  DimStats s;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  return s;
}

// Accumulates per-dimension min/max and a two-pass mean/std.
DimStats Summarize(const std::vector<const EpisodeData*>& eps, int dims, bool actions) {
  DimStats s;
  if (dims == 0) return s;
  s.min.assign(dims, INFINITY);
  s.max.assign(dims, -INFINITY);
  s.mean.assign(dims, 0.0);
  s.std.assign(dims, 0.0);
  double n = 0.0;
  for (const EpisodeData* e : eps) {
    for (int t = 0; t < e->length; ++t) {
      const double* row = actions ? e->act(t) : e->obs(t);
      for (int d = 0; d < dims; ++d) {
        s.min[d] = std::min(s.min[d], row[d]);
        s.max[d] = std::max(s.max[d], row[d]);
        s.mean[d] += row[d];
      }
      n += 1.0;
    }
  }
  for (double& m : s.mean) m /= n;
  for (const EpisodeData* e : eps) {
    for (int t = 0; t < e->length; ++t) {
      const double* row = actions ? e->act(t) : e->obs(t);
      for (int d = 0; d < dims; ++d) s.std[d] += (row[d] - s.mean[d]) * (row[d] - s.mean[d]);
    }
  }
  for (double& v : s.std) v = std::max(std::sqrt(v / n), kStdFloor);
  return s;
}

}  // namespace

std::string_view SplitName(Split split) {
  return split == Split::kTrain ? "train" : "validation";
}

Split SplitFromName(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  throw Error(ErrorKind::kFormat, "unknown split '" + std::string(name) + "'");
}

int DatasetManifest::count(const std::string& behavior) const {
  auto it = counts.find(behavior);
  return it == counts.end() ? 0 : it->second;
}

bool DatasetManifest::Contains(const std::string& episode_id) const {
  return std::any_of(episodes.begin(), episodes.end(),
                     [&](const EpisodeRecord& r) { return r.id == episode_id; });
}

const EpisodeRecord& DatasetManifest::Find(const std::string& episode_id) const {
  for (const EpisodeRecord& r : episodes) {
    if (r.id == episode_id) return r;
  }
  throw Error(ErrorKind::kNotFound, "no episode '" + episode_id + "' in dataset " + id);
}

std::vector<const EpisodeRecord*> DatasetManifest::InSplit(Split split) const {
  std::vector<const EpisodeRecord*> out;
  for (const EpisodeRecord& r : episodes) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

nlohmann::json DatasetManifest::ToJson() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["id"] = id;
  j["seed"] = seed;
  j["d_obs"] = d_obs;
  j["d_act"] = d_act;
  nlohmann::json bs = nlohmann::json::array();
  for (const std::string& b : behaviors) bs.push_back({{"name", b}, {"episodes", count(b)}});
  j["behaviors"] = bs;
  nlohmann::json es = nlohmann::json::array();
  for (const EpisodeRecord& r : episodes) {
    es.push_back({{"id", r.id},
                  {"behavior", r.behavior},
                  {"index", r.index},
                  {"seed", r.seed},
                  {"length", r.length},
                  {"terminated_by_fall", r.terminated_by_fall},
                  {"split", SplitName(r.split)}});
  }
  j["episodes"] = es;
  if (stats) {
    j["stats"] = {{"observations", StatsToJson(stats->observations)},
                  {"actions", StatsToJson(stats->actions)}};
  } else {
    j["stats"] = nullptr;
  }
  return j;
}

DatasetManifest DatasetManifest::FromJson(const nlohmann::json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw Error(ErrorKind::kFormat,
                  "unsupported manifest version " + std::to_string(version));
    }
    DatasetManifest m;
    m.id = j.at("id").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.d_obs = j.at("d_obs").get<int>();
    m.d_act = j.at("d_act").get<int>();
    for (const auto& b : j.at("behaviors")) {
      m.behaviors.push_back(b.at("name").get<std::string>());
      m.counts[m.behaviors.back()] = b.at("episodes").get<int>();
    }
    for (const auto& e : j.at("episodes")) {
      EpisodeRecord r;
      r.id = e.at("id").get<std::string>();
      r.behavior = e.at("behavior").get<std::string>();
      r.index = e.at("index").get<int>();
      r.seed = e.at("seed").get<uint64_t>();
      r.length = e.at("length").get<int>();
      r.terminated_by_fall = e.at("terminated_by_fall").get<bool>();
      r.split = SplitFromName(e.at("split").get<std::string>());
      m.episodes.push_back(std::move(r));
    }
    if (!j.at("stats").is_null()) {
      m.stats = NormalizationStats{StatsFromJson(j["stats"].at("observations")),
                                   StatsFromJson(j["stats"].at("actions"))};
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("malformed manifest: ") + e.what());
  }
}

void WriteEpisodeFile(const EpisodeData& ep, const fs::path& path) {
  Header h{};
  std::memcpy(h.magic, kMagic, 4);
  h.version = kEpisodeVersion;
  h.length = static_cast<uint32_t>(ep.length);
  h.d_obs = static_cast<uint32_t>(ep.d_obs);
  h.d_act = static_cast<uint32_t>(ep.d_act);
  h.flags = ep.terminated_by_fall ? kFallFlag : 0;
  h.seed = ep.seed;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  WriteFloats(out, ep.observations);
  WriteFloats(out, ep.actions);
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

EpisodeData ReadEpisodeFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open episode file " + path.string());
  Header h{};
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in) throw Error(ErrorKind::kTruncated, path.string() + ": truncated header");
  if (std::memcmp(h.magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, path.string() + ": not an episode file (bad magic)");
  }
  if (h.version != kEpisodeVersion) {
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported version " +
                                        std::to_string(h.version));
  }
  EpisodeData ep;
  ep.length = static_cast<int>(h.length);
  ep.d_obs = static_cast<int>(h.d_obs);
  ep.d_act = static_cast<int>(h.d_act);
  ep.terminated_by_fall = (h.flags & kFallFlag) != 0;
  ep.seed = h.seed;
  ReadFloats(in, ep.observations, static_cast<size_t>(ep.length) * ep.d_obs, path, "observation");
  ReadFloats(in, ep.actions, static_cast<size_t>(ep.length) * ep.d_act, path, "action");
  return ep;
}

Dataset Dataset::Create(const fs::path& dir, std::string id, uint64_t seed, int d_obs,
                        int d_act) {
  if (d_obs < 1 || d_act < 0) {
    throw Error(ErrorKind::kPrecondition, "dataset needs d_obs >= 1 and d_act >= 0");
  }
  if (fs::exists(dir / "manifest.json")) {
    throw Error(ErrorKind::kDuplicate, "dataset already exists at " + dir.string());
  }
  fs::create_directories(dir / "episodes");
  DatasetManifest m;
  m.id = std::move(id);
  m.seed = seed;
  m.d_obs = d_obs;
  m.d_act = d_act;
  Dataset ds(dir, std::move(m));
  WriterLock lock(dir);
  ds.SaveManifest();
  return ds;
}

Dataset Dataset::Open(const fs::path& dir) {
  Dataset ds(dir, {});
  ds.Reload();
  return ds;
}

void Dataset::Reload() {
  const fs::path p = dir_ / "manifest.json";
  std::ifstream in(p);
  if (!in) throw Error(ErrorKind::kNotFound, "no dataset manifest at " + p.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, p.string() + ": " + e.what());
  }
  manifest_ = DatasetManifest::FromJson(j);
}

void Dataset::SaveManifest() const {
  AtomicWriteText(dir_ / "manifest.json", manifest_.ToJson().dump(1) + "\n");
}

fs::path Dataset::EpisodePath(const std::string& episode_id) const {
  return dir_ / "episodes" / (episode_id + ".hmge");
}

void Dataset::SetFaultHook(std::function<void()> hook) { FaultHook() = std::move(hook); }

void Dataset::WriteEpisode(const EpisodeData& ep, Split split) {
  if (ep.d_obs != manifest_.d_obs || ep.d_act != manifest_.d_act) {
    throw Error(ErrorKind::kDimension,
                "episode '" + ep.id + "' dims (" + std::to_string(ep.d_obs) + ", " +
                    std::to_string(ep.d_act) + ") do not match dataset (" +
                    std::to_string(manifest_.d_obs) + ", " + std::to_string(manifest_.d_act) + ")");
  }
  if (ep.length < 1 ||
      ep.observations.size() != static_cast<size_t>(ep.length) * ep.d_obs ||
      ep.actions.size() != static_cast<size_t>(ep.length) * ep.d_act) {
    throw Error(ErrorKind::kDimension, "episode '" + ep.id + "' payload size mismatch");
  }
  WriterLock lock(dir_);
  Reload();  // another writer may have appended since we last looked
  if (manifest_.Contains(ep.id)) {
    throw Error(ErrorKind::kDuplicate, "episode '" + ep.id + "' already stored");
  }
  const fs::path path = EpisodePath(ep.id);
  fs::path tmp = path;
  tmp += ".tmp";
  WriteEpisodeFile(ep, tmp);
  if (FaultHook()) FaultHook()();
  fs::rename(tmp, path);

  if (!manifest_.counts.contains(ep.behavior)) manifest_.behaviors.push_back(ep.behavior);
  ++manifest_.counts[ep.behavior];
  manifest_.episodes.push_back(EpisodeRecord{ep.id, ep.behavior, ep.index, ep.seed, ep.length,
                                             ep.terminated_by_fall, split});
  manifest_.stats.reset();
  SaveManifest();
}

EpisodeData Dataset::LoadEpisode(const std::string& episode_id) const {
  const EpisodeRecord& r = manifest_.Find(episode_id);
  EpisodeData ep = ReadEpisodeFile(EpisodePath(episode_id));
  if (ep.length != r.length || ep.d_obs != manifest_.d_obs || ep.d_act != manifest_.d_act) {
    throw Error(ErrorKind::kFormat, "episode '" + episode_id + "' disagrees with the manifest");
  }
  ep.id = r.id;
  ep.behavior = r.behavior;
  ep.index = r.index;
  return ep;
}

Window Dataset::LoadWindow(const std::string& episode_id, int start, int length) const {
  const EpisodeRecord& r = manifest_.Find(episode_id);
  if (start < 0 || length < 1 || start + length > r.length) {
    throw Error(ErrorKind::kRange, "window [" + std::to_string(start) + ", " +
                                       std::to_string(start + length) + ") outside episode '" +
                                       episode_id + "' of length " + std::to_string(r.length));
  }
  const EpisodeData ep = LoadEpisode(episode_id);
  Window w;
  w.observations.assign(ep.obs(start), ep.obs(start) + static_cast<size_t>(length) * ep.d_obs);
  if (ep.d_act > 0) {
    w.actions.assign(ep.act(start), ep.act(start) + static_cast<size_t>(length) * ep.d_act);
  }
  return w;
}

void Dataset::Verify() const {
  for (const EpisodeRecord& r : manifest_.episodes) {
    const fs::path p = EpisodePath(r.id);
    const uintmax_t want = sizeof(Header) + sizeof(float) * static_cast<uintmax_t>(r.length) *
                                                (manifest_.d_obs + manifest_.d_act);
    if (!fs::exists(p) || fs::file_size(p) != want) {
      throw Error(ErrorKind::kFormat, "episode file for '" + r.id + "' missing or wrong size");
    }
  }
  int total = 0;
  for (const auto& [b, n] : manifest_.counts) total += n;
  if (total != static_cast<int>(manifest_.episodes.size())) {
    throw Error(ErrorKind::kFormat, "manifest counts disagree with episode list");
  }
}

const NormalizationStats& Dataset::FinalizeStats() {
  NormalizationStats s = ComputeNormalizationStats(*this);
  WriterLock lock(dir_);
  Reload();
  manifest_.stats = std::move(s);
  SaveManifest();
  return *manifest_.stats;
}

NormalizationStats ComputeNormalizationStats(const Dataset& dataset) {
  const DatasetManifest& m = dataset.manifest();
  std::vector<const EpisodeRecord*> train = m.InSplit(Split::kTrain);
  if (train.empty()) {
    throw Error(ErrorKind::kPrecondition, "dataset " + m.id + " has an empty train split");
  }
  std::sort(train.begin(), train.end(),
            [](const EpisodeRecord* a, const EpisodeRecord* b) { return a->id < b->id; });
  std::vector<EpisodeData> data;
  data.reserve(train.size());
  for (const EpisodeRecord* r : train) data.push_back(dataset.LoadEpisode(r->id));
  std::vector<const EpisodeData*> ptrs;
  for (const EpisodeData& e : data) ptrs.push_back(&e);
  return {Summarize(ptrs, m.d_obs, false), Summarize(ptrs, m.d_act, true)};
}

DatasetFraction MakeFraction(const DatasetManifest& manifest, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::kRange, "fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  DatasetFraction out{manifest.id, fraction, seed, {}};
  for (const std::string& b : manifest.behaviors) {
    std::vector<std::string> ids;
    for (const EpisodeRecord& r : manifest.episodes) {
      if (r.behavior == b && r.split == Split::kTrain) ids.push_back(r.id);
    }
    if (ids.empty()) continue;
    std::sort(ids.begin(), ids.end());
    // The permutation depends only on (seed, behavior), so smaller fractions
    // are prefixes of larger ones.
    std::mt19937_64 rng(seed ^ Fnv1a().Add(b).value());
    std::shuffle(ids.begin(), ids.end(), rng);
    const int n = static_cast<int>(ids.size());
    const int keep = std::clamp(static_cast<int>(std::floor(fraction * n + 0.5)), 1, n);
    out.selected.insert(out.selected.end(), ids.begin(), ids.begin() + keep);
  }
  return out;
}

void ExportCsv(const EpisodeData& ep, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "step";
  for (int d = 0; d < ep.d_obs; ++d) out << ",obs_" << d;
  for (int d = 0; d < ep.d_act; ++d) out << ",act_" << d;
  out << "\n";
  out.precision(9);
  for (int t = 0; t < ep.length; ++t) {
    out << t;
    for (int d = 0; d < ep.d_obs; ++d) out << "," << ep.obs(t)[d];
    for (int d = 0; d < ep.d_act; ++d) out << "," << ep.act(t)[d];
    out << "\n";
  }
}

}  // namespace hmg::dataset
