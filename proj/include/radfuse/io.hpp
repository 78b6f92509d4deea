#pragma once

// File formats and the message wire form. Configs and reports are single
// JSON documents; message logs and run records are newline-delimited JSON
// records so they can be replayed as streams. Every file carries a schema
// tag "radfuse/<kind>/<major>" and loaders reject unknown majors.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/eval.hpp"
#include "radfuse/fusion.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/selfcal.hpp"
#include "radfuse/sim.hpp"
#include "radfuse/track.hpp"

namespace radfuse::io {

using json = nlohmann::json;

struct schema_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string schema_tag(const std::string& kind, int major) {
  return "radfuse/" + kind + "/" + std::to_string(major);
}

// Accepts any minor evolution under the same major: the kind must match
// exactly and the major version must be the supported one.
inline void require_schema(const json& j, const std::string& kind, int major) {
  if (!j.contains("schema") || !j["schema"].is_string()) {
    throw schema_error("missing schema field (expected " + schema_tag(kind, major) + ")");
  }
  const std::string s = j["schema"].get<std::string>();
  const auto last = s.rfind('/');
  if (last == std::string::npos || s.substr(0, last) != "radfuse/" + kind ||
      std::stoi(s.substr(last + 1)) != major) {
    throw schema_error("unsupported schema '" + s + "' (expected " + schema_tag(kind, major) + ")");
  }
}

// --- small building blocks ---------------------------------------------

inline json vec2_to_json(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
inline Eigen::Vector2d vec2_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

inline json vec4_to_json(const Eigen::Vector4d& v) {
  return json::array({v(0), v(1), v(2), v(3)});
}
inline Eigen::Vector4d vec4_from_json(const json& j) {
  Eigen::Vector4d v;
  for (int i = 0; i < 4; ++i) v(i) = j.at(i).get<double>();
  return v;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  return out;
}

template <int N>
Eigen::Matrix<double, N, N> mat_from_json(const json& j) {
  Eigen::Matrix<double, N, N> m;
  for (int r = 0; r < N; ++r)
    for (int c = 0; c < N; ++c) m(r, c) = j.at(r * N + c).get<double>();
  return m;
}

inline json pose_to_json(const geom::Pose2D& p) {
  return {{"t", vec2_to_json(p.t)}, {"R", mat_to_json(p.R)}};
}
inline geom::Pose2D pose_from_json(const json& j) {
  geom::Pose2D p;
  p.t = vec2_from_json(j.at("t"));
  p.R = mat_from_json<2>(j.at("R"));
  return p;
}

// --- parameter blocks ----------------------------------------------------

inline json kf_to_json(const track::KFParams& p) {
  return {{"q", p.q},
          {"sigma_r_m", p.sigma_r},
          {"sigma_theta_deg", p.sigma_theta_deg},
          {"fov_half_deg", p.fov_half_deg},
          {"gate_d_m", p.gate_d},
          {"m_hits", p.m_hits},
          {"n_window", p.n_window},
          {"init_vel_var", p.init_vel_var},
          {"stab_eps", p.stab.eps},
          {"stab_cond_max", p.stab.cond_max}};
}
inline track::KFParams kf_from_json(const json& j) {
  track::KFParams p;
  p.q = j.value("q", p.q);
  p.sigma_r = j.value("sigma_r_m", p.sigma_r);
  p.sigma_theta_deg = j.value("sigma_theta_deg", p.sigma_theta_deg);
  p.fov_half_deg = j.value("fov_half_deg", p.fov_half_deg);
  p.gate_d = j.value("gate_d_m", p.gate_d);
  p.m_hits = j.value("m_hits", p.m_hits);
  p.n_window = j.value("n_window", p.n_window);
  p.init_vel_var = j.value("init_vel_var", p.init_vel_var);
  p.stab.eps = j.value("stab_eps", p.stab.eps);
  p.stab.cond_max = j.value("stab_cond_max", p.stab.cond_max);
  return p;
}

inline json fc_to_json(const fusion::FcParams& p) {
  return {{"T_c_s", p.T_c},      {"A_th", p.A_th},         {"T_th_s", p.T_th},
          {"m_hits", p.m_hits},  {"n_window", p.n_window}, {"tau0_s", p.tau0},
          {"q", p.q},            {"stab_eps", p.stab.eps}, {"stab_cond_max", p.stab.cond_max}};
}
inline fusion::FcParams fc_from_json(const json& j) {
  fusion::FcParams p;
  p.T_c = j.value("T_c_s", p.T_c);
  p.A_th = j.value("A_th", p.A_th);
  p.T_th = j.value("T_th_s", p.T_th);
  p.m_hits = j.value("m_hits", p.m_hits);
  p.n_window = j.value("n_window", p.n_window);
  p.tau0 = j.value("tau0_s", p.tau0);
  p.q = j.value("q", p.q);
  p.stab.eps = j.value("stab_eps", p.stab.eps);
  p.stab.cond_max = j.value("stab_cond_max", p.stab.cond_max);
  return p;
}

inline json calib_params_to_json(const selfcal::CalibParams& p) {
  return {{"T_c_s", p.T_c},
          {"A_self", p.A_self},
          {"max_pairs", p.max_pairs},
          {"min_overlap_s", p.min_overlap_s},
          {"use_masking", p.use_masking}};
}
inline selfcal::CalibParams calib_params_from_json(const json& j) {
  selfcal::CalibParams p;
  p.T_c = j.value("T_c_s", p.T_c);
  p.A_self = j.value("A_self", p.A_self);
  p.max_pairs = j.value("max_pairs", p.max_pairs);
  p.min_overlap_s = j.value("min_overlap_s", p.min_overlap_s);
  p.use_masking = j.value("use_masking", p.use_masking);
  return p;
}

inline json model_to_json(const sim::SensorModel& m) {
  return {{"sigma_r_m", m.sigma_r},
          {"sigma_theta_deg", m.sigma_theta_deg},
          {"p_detect", m.p_detect},
          {"stamp_jitter_s", m.stamp_jitter},
          {"delay_min_s", m.delay_min},
          {"delay_max_s", m.delay_max},
          {"body_radius_m", m.body_radius}};
}
inline sim::SensorModel model_from_json(const json& j) {
  sim::SensorModel m;
  m.sigma_r = j.value("sigma_r_m", m.sigma_r);
  m.sigma_theta_deg = j.value("sigma_theta_deg", m.sigma_theta_deg);
  m.p_detect = j.value("p_detect", m.p_detect);
  m.stamp_jitter = j.value("stamp_jitter_s", m.stamp_jitter);
  m.delay_min = j.value("delay_min_s", m.delay_min);
  m.delay_max = j.value("delay_max_s", m.delay_max);
  m.body_radius = j.value("body_radius_m", m.body_radius);
  return m;
}

inline json eval_params_to_json(const eval::EvalParams& p) {
  return {{"gate_m", p.gate}, {"warmup_s", p.warmup_s}};
}
inline eval::EvalParams eval_params_from_json(const json& j) {
  eval::EvalParams p;
  p.gate = j.value("gate_m", p.gate);
  p.warmup_s = j.value("warmup_s", p.warmup_s);
  return p;
}

// --- scenario -------------------------------------------------------------

inline json scenario_to_json(const sim::Scenario& sc) {
  json sensors = json::array();
  for (const auto& s : sc.sensors) {
    sensors.push_back({{"id", s.id},
                       {"pose", pose_to_json(s.pose)},
                       {"fov_half_deg", s.fov_half_deg},
                       {"max_range_m", s.max_range},
                       {"frame_period_s", s.frame_period}});
  }
  json targets = json::array();
  for (const auto& t : sc.targets) {
    targets.push_back({{"kind", sim::to_string(t.kind)},
                       {"speed_mps", t.speed},
                       {"a", vec2_to_json(t.a)},
                       {"b", vec2_to_json(t.b)},
                       {"center", vec2_to_json(t.center)},
                       {"radius_m", t.radius},
                       {"period_s", t.period},
                       {"phase", t.phase}});
  }
  return {{"schema", schema_tag("scenario", 1)},
          {"room", {{"width_m", sc.room_w}, {"height_m", sc.room_h}}},
          {"duration_s", sc.duration},
          {"seed", sc.seed},
          {"sensors", sensors},
          {"targets", targets}};
}

inline sim::Scenario scenario_from_json(const json& j) {
  require_schema(j, "scenario", 1);
  sim::Scenario sc;
  sc.room_w = j.at("room").at("width_m").get<double>();
  sc.room_h = j.at("room").at("height_m").get<double>();
  sc.duration = j.at("duration_s").get<double>();
  sc.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& js : j.at("sensors")) {
    sim::SensorSpec s;
    s.id = js.at("id").get<int>();
    s.pose = pose_from_json(js.at("pose"));
    s.fov_half_deg = js.value("fov_half_deg", s.fov_half_deg);
    s.max_range = js.value("max_range_m", s.max_range);
    s.frame_period = js.value("frame_period_s", s.frame_period);
    sc.sensors.push_back(s);
  }
  for (const auto& jt : j.at("targets")) {
    sim::TargetSpec t;
    t.kind = sim::path_kind_from_string(jt.at("kind").get<std::string>());
    t.speed = jt.value("speed_mps", t.speed);
    t.a = vec2_from_json(jt.at("a"));
    t.b = vec2_from_json(jt.at("b"));
    t.center = vec2_from_json(jt.at("center"));
    t.radius = jt.value("radius_m", t.radius);
    t.period = jt.value("period_s", t.period);
    t.phase = jt.value("phase", t.phase);
    sc.targets.push_back(t);
  }
  return sc;
}

// --- calibration ------------------------------------------------------------

inline json calib_result_to_json(const selfcal::CalibResult& cal) {
  json sensors = json::array();
  for (const auto& [sensor, c] : cal.by_sensor) {
    json js = {{"sensor", sensor}, {"ok", c.ok}};
    if (c.ok) {
      js["pose"] = pose_to_json(c.pose);
      js["orientation_deg"] = geom::orientation_angle_deg(c.pose.R);
      js["n_candidates"] = c.n_candidates;
      js["n_selected"] = c.n_selected;
      if (c.stacked_K > 0) {
        js["stacked_A"] = c.stacked_A;
        js["stacked_xi"] = c.stacked_xi;
        js["stacked_K"] = c.stacked_K;
      }
    } else {
      js["error"] = c.error;
    }
    json pairs = json::array();
    for (const auto& p : c.pairs) {
      pairs.push_back({{"ref_track", p.ref_track_id},
                       {"other_track", p.other_track_id},
                       {"A", p.A},
                       {"xi", p.xi},
                       {"mean_shift_s", p.mean_shift},
                       {"K", p.K},
                       {"selected", p.selected}});
    }
    js["pairs"] = pairs;
    sensors.push_back(js);
  }
  return {{"schema", schema_tag("calib", 1)}, {"sensors", sensors}};
}

inline selfcal::CalibResult calib_result_from_json(const json& j) {
  require_schema(j, "calib", 1);
  selfcal::CalibResult cal;
  for (const auto& js : j.at("sensors")) {
    selfcal::SensorCalibration c;
    c.ok = js.at("ok").get<bool>();
    if (c.ok) {
      c.pose = pose_from_json(js.at("pose"));
      c.n_candidates = js.value("n_candidates", 0);
      c.n_selected = js.value("n_selected", 0);
      c.stacked_A = js.value("stacked_A", selfcal::kInf);
      c.stacked_xi = js.value("stacked_xi", selfcal::kInf);
      c.stacked_K = js.value("stacked_K", 0);
    } else {
      c.error = js.value("error", "");
    }
    for (const auto& jp : js.value("pairs", json::array())) {
      selfcal::PairDiag p;
      p.ref_track_id = jp.at("ref_track").get<std::uint64_t>();
      p.other_track_id = jp.at("other_track").get<std::uint64_t>();
      p.A = jp.at("A").get<double>();
      p.xi = jp.at("xi").get<double>();
      p.mean_shift = jp.at("mean_shift_s").get<double>();
      p.K = jp.at("K").get<int>();
      p.selected = jp.at("selected").get<bool>();
      c.pairs.push_back(p);
    }
    cal.by_sensor[js.at("sensor").get<int>()] = std::move(c);
  }
  return cal;
}

// --- reports ----------------------------------------------------------------

inline json mot_report_to_json(const eval::MotReport& r) {
  json j = {{"schema", schema_tag("mot-report", 1)},
            {"mota", r.mota},
            {"misses", r.misses},
            {"false_positives", r.false_positives},
            {"switches", r.switches},
            {"gt_total", r.gt_total},
            {"matches", r.matches}};
  if (r.motp) j["motp_m"] = *r.motp;
  return j;
}

inline eval::MotReport mot_report_from_json(const json& j) {
  require_schema(j, "mot-report", 1);
  eval::MotReport r;
  r.mota = j.at("mota").get<double>();
  r.misses = j.at("misses").get<long>();
  r.false_positives = j.at("false_positives").get<long>();
  r.switches = j.at("switches").get<long>();
  r.gt_total = j.at("gt_total").get<long>();
  r.matches = j.at("matches").get<long>();
  if (j.contains("motp_m")) r.motp = j["motp_m"].get<double>();
  return r;
}

inline json calib_report_to_json(const eval::CalibReport& r) {
  json sensors = json::array();
  for (const auto& e : r.sensors) {
    json js = {{"sensor", e.sensor}, {"present", e.present}};
    if (e.present) {
      js["position_error_m"] = e.position_error_m;
      js["orientation_error_deg"] = e.orientation_error_deg;
    }
    sensors.push_back(js);
  }
  return {{"schema", schema_tag("calib-report", 1)}, {"sensors", sensors}};
}

inline eval::CalibReport calib_report_from_json(const json& j) {
  require_schema(j, "calib-report", 1);
  eval::CalibReport r;
  for (const auto& js : j.at("sensors")) {
    eval::CalibReport::Entry e;
    e.sensor = js.at("sensor").get<int>();
    e.present = js.at("present").get<bool>();
    if (e.present) {
      e.position_error_m = js.at("position_error_m").get<double>();
      e.orientation_error_deg = js.at("orientation_error_deg").get<double>();
    }
    r.sensors.push_back(e);
  }
  return r;
}

// --- run config ---------------------------------------------------------------

struct RunConfig {
  std::string scenario_path;
  sim::SensorModel model;
  track::KFParams kf;
  fusion::FcParams fc;
  selfcal::CalibParams calib_params;
  sim::CalibSource calib_source = sim::CalibSource::GroundTruth;
  std::string calib_file;
  eval::EvalParams eval_params;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  std::vector<double> tc_over_ts_sweep = {0.2, 0.5, 0.8, 1.0, 2.0, 5.0, 10.0, 25.0};
};

inline json run_config_to_json(const RunConfig& c) {
  return {{"schema", schema_tag("config", 1)},
          {"scenario", c.scenario_path},
          {"sensor_model", model_to_json(c.model)},
          {"kf", kf_to_json(c.kf)},
          {"fc", fc_to_json(c.fc)},
          {"calib",
           {{"source", sim::to_string(c.calib_source)},
            {"file", c.calib_file},
            {"params", calib_params_to_json(c.calib_params)}}},
          {"eval", eval_params_to_json(c.eval_params)},
          {"out_dir", c.out_dir},
          {"seed", c.seed},
          {"tc_over_ts_sweep", c.tc_over_ts_sweep}};
}

inline sim::CalibSource calib_source_from_string(const std::string& s) {
  if (s == "gt") return sim::CalibSource::GroundTruth;
  if (s == "selfcal") return sim::CalibSource::SelfCal;
  if (s == "file") return sim::CalibSource::File;
  throw std::invalid_argument("unknown calibration source: " + s);
}

inline RunConfig run_config_from_json(const json& j) {
  require_schema(j, "config", 1);
  RunConfig c;
  c.scenario_path = j.at("scenario").get<std::string>();
  if (j.contains("sensor_model")) c.model = model_from_json(j["sensor_model"]);
  if (j.contains("kf")) c.kf = kf_from_json(j["kf"]);
  if (j.contains("fc")) c.fc = fc_from_json(j["fc"]);
  if (j.contains("calib")) {
    const auto& jc = j["calib"];
    c.calib_source = calib_source_from_string(jc.value("source", "gt"));
    c.calib_file = jc.value("file", "");
    if (jc.contains("params")) c.calib_params = calib_params_from_json(jc["params"]);
  }
  if (j.contains("eval")) c.eval_params = eval_params_from_json(j["eval"]);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("tc_over_ts_sweep")) {
    c.tc_over_ts_sweep = j["tc_over_ts_sweep"].get<std::vector<double>>();
  }
  return c;
}

// --- run record (JSONL) ---------------------------------------------------------

inline json msg_to_json(const track::TrackSetMsg& msg) {
  json tracks = json::array();
  for (const auto& e : msg.tracks) {
    tracks.push_back({{"id", e.id}, {"x", vec4_to_json(e.x)}, {"C", mat_to_json(e.C)}});
  }
  return {{"sensor", msg.sensor_id}, {"stamp", msg.stamp}, {"tracks", tracks}};
}

inline track::TrackSetMsg msg_from_json(const json& j) {
  track::TrackSetMsg msg;
  msg.sensor_id = j.at("sensor").get<int>();
  msg.stamp = j.at("stamp").get<double>();
  for (const auto& jt : j.at("tracks")) {
    track::TrackSetMsg::Entry e;
    e.id = jt.at("id").get<std::uint64_t>();
    e.x = vec4_from_json(jt.at("x"));
    e.C = mat_from_json<4>(jt.at("C"));
    msg.tracks.push_back(e);
  }
  return msg;
}

inline void save_run_record(const sim::RunRecord& rec, std::ostream& os) {
  json header = {{"type", "header"},
                 {"schema", schema_tag("runrecord", 1)},
                 {"scenario", scenario_to_json(rec.scenario)},
                 {"sensor_model", model_to_json(rec.model)},
                 {"kf", kf_to_json(rec.kf)},
                 {"fc", fc_to_json(rec.fc)},
                 {"calib_source", sim::to_string(rec.calib_source)}};
  json poses = json::array();
  for (const auto& [sensor, pose] : rec.fusion_poses) {
    poses.push_back({{"sensor", sensor}, {"pose", pose_to_json(pose)}});
  }
  header["fusion_poses"] = poses;
  os << header.dump() << '\n';

  for (size_t i = 0; i < rec.gt.size(); ++i) {
    json pts = json::array();
    for (const auto& p : rec.gt[i].p) pts.push_back(vec2_to_json(p));
    os << json{{"type", "gt"}, {"target", i}, {"dt_s", rec.gt[i].dt}, {"p", pts}}.dump() << '\n';
  }
  if (!rec.calib.by_sensor.empty()) {
    os << json{{"type", "calib"}, {"result", calib_result_to_json(rec.calib)}}.dump() << '\n';
  }
  for (const auto& mr : rec.messages) {
    json j = msg_to_json(mr.msg);
    j["type"] = "msg";
    j["arrival"] = mr.arrival;
    os << j.dump() << '\n';
  }
  for (const auto& snap : rec.snapshots) {
    json tracks = json::array();
    for (const auto& e : snap.tracks) {
      tracks.push_back({{"id", e.id}, {"x", vec4_to_json(e.x)}, {"C", mat_to_json(e.C)}});
    }
    os << json{{"type", "snap"}, {"slot", snap.slot}, {"t", snap.t}, {"tracks", tracks}}.dump()
       << '\n';
  }
}

inline sim::RunRecord load_run_record(std::istream& is) {
  sim::RunRecord rec;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "header") {
      require_schema(j, "runrecord", 1);
      rec.scenario = scenario_from_json(j.at("scenario"));
      rec.model = model_from_json(j.at("sensor_model"));
      rec.kf = kf_from_json(j.at("kf"));
      rec.fc = fc_from_json(j.at("fc"));
      rec.calib_source = calib_source_from_string(j.at("calib_source").get<std::string>());
      for (const auto& jp : j.at("fusion_poses")) {
        rec.fusion_poses[jp.at("sensor").get<int>()] = pose_from_json(jp.at("pose"));
      }
      have_header = true;
    } else if (type == "gt") {
      const size_t idx = j.at("target").get<size_t>();
      if (rec.gt.size() <= idx) rec.gt.resize(idx + 1);
      rec.gt[idx].dt = j.at("dt_s").get<double>();
      for (const auto& jp : j.at("p")) rec.gt[idx].p.push_back(vec2_from_json(jp));
    } else if (type == "calib") {
      rec.calib = calib_result_from_json(j.at("result"));
    } else if (type == "msg") {
      sim::MsgRec mr;
      mr.msg = msg_from_json(j);
      mr.arrival = j.at("arrival").get<double>();
      rec.messages.push_back(std::move(mr));
    } else if (type == "snap") {
      fusion::Snapshot snap;
      snap.slot = j.at("slot").get<int>();
      snap.t = j.at("t").get<double>();
      for (const auto& jt : j.at("tracks")) {
        track::TrackSetMsg::Entry e;
        e.id = jt.at("id").get<std::uint64_t>();
        e.x = vec4_from_json(jt.at("x"));
        e.C = mat_from_json<4>(jt.at("C"));
        snap.tracks.push_back(e);
      }
      rec.snapshots.push_back(std::move(snap));
    } else {
      throw schema_error("unknown run-record entry type '" + type + "'");
    }
  }
  if (!have_header) throw schema_error("run record has no header record");
  return rec;
}

// --- file helpers -----------------------------------------------------------

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void save_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline json load_json_file(const std::filesystem::path& path) {
  return json::parse(read_text_file(path));
}

inline void save_run_record_file(const std::filesystem::path& path, const sim::RunRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  save_run_record(rec, os);
}

inline sim::RunRecord load_run_record_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return load_run_record(is);
}

// --- wire form ----------------------------------------------------------------

// Track-set messages on a stream socket use the log schema framed with a
// 32-bit little-endian length prefix, so a captured stream doubles as a
// replayable log.
inline std::string encode_frame(const track::TrackSetMsg& msg) {
  const std::string body = msg_to_json(msg).dump();
  const std::uint32_t n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>(n & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out += body;
  return out;
}

// Consumes one complete frame from the front of `buffer` if present.
inline std::optional<track::TrackSetMsg> decode_frame(std::string& buffer) {
  if (buffer.size() < 4) return std::nullopt;
  const auto b = [&](size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer[i])); };
  const std::uint32_t n = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
  if (buffer.size() < 4 + n) return std::nullopt;
  const json j = json::parse(buffer.substr(4, n));
  buffer.erase(0, 4 + n);
  return msg_from_json(j);
}

}  // namespace radfuse::io
