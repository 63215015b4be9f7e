#include "wavesfm/wavesim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wavesfm/signalpipe/preprocess.hpp"
#include "wavesfm/tensorcore/parallel.hpp"

namespace wavesfm::sim {

std::string_view dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::kSpectrogram: return "spectrogram";
    case DatasetKind::kActivity: return "activity";
    case DatasetKind::kPositioning: return "positioning";
    case DatasetKind::kChanEst: return "chanest";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  for (auto k : {DatasetKind::kSpectrogram, DatasetKind::kActivity, DatasetKind::kPositioning, DatasetKind::kChanEst}) {
    if (dataset_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown dataset kind: " + std::string(name));
}

void DatasetSpec::validate() const {
  if (count == 0) throw std::invalid_argument("dataset: count must be positive");
  for (int c : classes) {
    if (c < 0 || c >= kSpectrogramClasses) throw std::invalid_argument("dataset: spectrogram class out of range");
  }
  if (gain_spread_db < 0.0) throw std::invalid_argument("dataset: negative gain spread");
  if (!(front_end.edge_start > 0.0 && front_end.edge_start <= 0.5)) {
    throw std::invalid_argument("dataset: front-end edge must lie in (0, 0.5]");
  }
  if (snr_min_db > snr_max_db) throw std::invalid_argument("dataset: empty SNR range");
  if (kind == DatasetKind::kChanEst) ofdm.validate();
  if (kind == DatasetKind::kSpectrogram && (stft.fft_size < 2 || stft.hop == 0 || stft.frames == 0 || stft.average == 0)) {
    throw std::invalid_argument("dataset: bad STFT geometry");
  }
}

std::size_t DatasetSpec::num_classes() const {
  switch (kind) {
    case DatasetKind::kSpectrogram: return classes.empty() ? kSpectrogramClasses : classes.size();
    case DatasetKind::kActivity: return kActivityClasses;
    default: return 0;
  }
}

nlohmann::json to_json(const DatasetSpec& s) {
  const auto& p = s.positioning;
  return {{"kind", dataset_kind_name(s.kind)},
          {"count", s.count},
          {"classes", s.classes},
          {"snr_min_db", s.snr_min_db},
          {"snr_max_db", s.snr_max_db},
          {"gain_spread_db", s.gain_spread_db},
          {"db_scale", s.db_scale},
          {"front_end", {{"edge_start", s.front_end.edge_start}, {"edge_floor_db", s.front_end.edge_floor_db}}},
          {"stft", {{"fft_size", s.stft.fft_size}, {"hop", s.stft.hop}, {"frames", s.stft.frames}, {"average", s.stft.average}}},
          {"activity",
           {{"subcarriers", s.activity.subcarriers},
            {"frames", s.activity.frames},
            {"antennas", s.activity.antennas},
            {"frame_rate_hz", s.activity.frame_rate_hz},
            {"noise_std", s.activity.noise_std}}},
          {"positioning",
           {{"subcarriers", p.subcarriers},
            {"symbols", p.symbols},
            {"subcarrier_spacing_hz", p.subcarrier_spacing_hz},
            {"arena_min", p.arena_min},
            {"arena_max", p.arena_max},
            {"base_stations", p.base_stations},
            {"multipath", p.multipath},
            {"multipath_power", p.multipath_power},
            {"max_excess_delay_s", p.max_excess_delay_s},
            {"noise_std", p.noise_std}}},
          {"ofdm", to_json(s.ofdm)}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.kind = parse_dataset_kind(j.value("kind", std::string(dataset_kind_name(s.kind))));
  s.count = j.value("count", s.count);
  s.classes = j.value("classes", s.classes);
  s.snr_min_db = j.value("snr_min_db", s.snr_min_db);
  s.snr_max_db = j.value("snr_max_db", s.snr_max_db);
  s.gain_spread_db = j.value("gain_spread_db", s.gain_spread_db);
  s.db_scale = j.value("db_scale", s.db_scale);
  if (j.contains("front_end")) {
    s.front_end.edge_start = j["front_end"].value("edge_start", s.front_end.edge_start);
    s.front_end.edge_floor_db = j["front_end"].value("edge_floor_db", s.front_end.edge_floor_db);
  }
  if (j.contains("stft")) {
    const auto& t = j["stft"];
    s.stft.fft_size = t.value("fft_size", s.stft.fft_size);
    s.stft.hop = t.value("hop", s.stft.hop);
    s.stft.frames = t.value("frames", s.stft.frames);
    s.stft.average = t.value("average", s.stft.average);
  }
  if (j.contains("activity")) {
    const auto& a = j["activity"];
    s.activity.subcarriers = a.value("subcarriers", s.activity.subcarriers);
    s.activity.frames = a.value("frames", s.activity.frames);
    s.activity.antennas = a.value("antennas", s.activity.antennas);
    s.activity.frame_rate_hz = a.value("frame_rate_hz", s.activity.frame_rate_hz);
    s.activity.noise_std = a.value("noise_std", s.activity.noise_std);
  }
  if (j.contains("positioning")) {
    const auto& a = j["positioning"];
    auto& p = s.positioning;
    p.subcarriers = a.value("subcarriers", p.subcarriers);
    p.symbols = a.value("symbols", p.symbols);
    p.subcarrier_spacing_hz = a.value("subcarrier_spacing_hz", p.subcarrier_spacing_hz);
    p.arena_min = a.value("arena_min", p.arena_min);
    p.arena_max = a.value("arena_max", p.arena_max);
    p.base_stations = a.value("base_stations", p.base_stations);
    p.multipath = a.value("multipath", p.multipath);
    p.multipath_power = a.value("multipath_power", p.multipath_power);
    p.max_excess_delay_s = a.value("max_excess_delay_s", p.max_excess_delay_s);
    p.noise_std = a.value("noise_std", p.noise_std);
  }
  if (j.contains("ofdm")) s.ofdm = ofdm_config_from_json(j["ofdm"]);
  return s;
}

sp::Archive generate_dataset(const DatasetSpec& spec, std::uint64_t seed, std::size_t threads) {
  spec.validate();
  sp::Archive ar;
  ar.samples.resize(spec.count);
  ar.generator = to_json(spec);
  ar.generator["seed"] = seed;
  const tc::RngState root(seed, 0xDA7A);
  const std::size_t n_classes = spec.num_classes();
  tc::parallel_for(
      spec.count,
      [&](std::size_t i) {
        tc::RngState rng = root.split(i);
        sp::GridSample s;
        switch (spec.kind) {
          case DatasetKind::kSpectrogram: {
            const int label = static_cast<int>(i % n_classes);
            const int cls = spec.classes.empty() ? label : spec.classes[static_cast<std::size_t>(label)];
            auto scene = scene_for_class(cls, rng.uniform(spec.snr_min_db, spec.snr_max_db));
            scene.gain_db = rng.uniform(-spec.gain_spread_db, spec.gain_spread_db);
            s = gen_spectrogram(scene, rng, spec.stft, spec.front_end);
            s.label = label;
            if (spec.db_scale) {
              for (auto& v : s.data.mutable_data()) v = 20.0 * std::log10(std::max(v, sp::kLogFloor));
            }
            break;
          }
          case DatasetKind::kActivity:
            s = gen_activity_csi(static_cast<int>(i % n_classes), rng, spec.activity);
            break;
          case DatasetKind::kPositioning:
            s = gen_positioning_sample(random_position(spec.positioning, rng), spec.positioning, rng);
            break;
          case DatasetKind::kChanEst:
            s = gen_chanest_sample(spec.ofdm, rng);
            break;
        }
        s.sample_id = std::string(dataset_kind_name(spec.kind)) + "-" + std::to_string(i);
        ar.samples[i] = std::move(s);
      },
      threads);
  return ar;
}

}  // namespace wavesfm::sim
