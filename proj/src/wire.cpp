#include "fishcal/wire.hpp"

#include <cstdio>

#include "fishcal/errors.hpp"

namespace fishcal::wire {

const char* topic_name(Topic t) {
  switch (t) {
    case Topic::Trajectory: return "trajectory";
    case Topic::Scores: return "scores";
    case Topic::Params: return "params";
    case Topic::Ack: return "ack";
    case Topic::Shutdown: return "shutdown";
  }
  return "?";
}

Topic topic_from_name(const std::string& name) {
  if (name == "trajectory") return Topic::Trajectory;
  if (name == "scores") return Topic::Scores;
  if (name == "params") return Topic::Params;
  if (name == "ack") return Topic::Ack;
  if (name == "shutdown") return Topic::Shutdown;
  throw UnknownTopicError("unknown topic '" + name + "'");
}

std::string encode(const Envelope& msg) {
  nlohmann::ordered_json j;
  j["topic"] = topic_name(msg.topic);
  j["schema_version"] = msg.schema_version;
  j["experiment_id"] = msg.experiment_id;
  j["t_sim_s"] = msg.t_sim_s;
  j["payload"] = msg.payload;
  return j.dump() + "\n";
}

Envelope decode(std::string_view line) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("bad message JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("topic") || !j.contains("schema_version") ||
      !j.contains("experiment_id") || !j.contains("t_sim_s") ||
      !j.contains("payload"))
    throw MalformedMessageError("message missing required fields");

  Envelope msg;
  try {
    msg.topic = topic_from_name(j.at("topic").get<std::string>());
    msg.schema_version = j.at("schema_version").get<int>();
    msg.experiment_id = j.at("experiment_id").get<std::string>();
    msg.t_sim_s = j.at("t_sim_s").get<double>();
    msg.payload = j.at("payload");
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("bad message field: ") + e.what());
  }
  if (msg.schema_version != kSchemaVersion)
    throw VersionMismatchError("unsupported schema_version " +
                               std::to_string(msg.schema_version));
  return msg;
}

nlohmann::ordered_json batch_to_json(const TrajectoryBatch& batch) {
  nlohmann::ordered_json j;
  j["frame_period_s"] = batch.frame_period_s;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : batch.frames) {
    nlohmann::ordered_json agents = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      agents.push_back({f.positions[i].x, f.positions[i].y,
                        static_cast<int>(f.robot_flags[i])});
    }
    frames.push_back({{"t_s", f.t_s}, {"agents", std::move(agents)}});
  }
  j["frames"] = std::move(frames);
  return j;
}

TrajectoryBatch batch_from_json(const nlohmann::json& j) {
  TrajectoryBatch batch;
  try {
    batch.frame_period_s = j.at("frame_period_s").get<double>();
    for (const auto& f : j.at("frames")) {
      TrajectoryFrame frame;
      frame.t_s = f.at("t_s").get<double>();
      for (const auto& a : f.at("agents")) {
        frame.positions.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
        frame.robot_flags.push_back(a.at(2).get<int>() != 0 ? 1 : 0);
      }
      batch.frames.push_back(std::move(frame));
    }
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("bad trajectory payload: ") + e.what());
  }
  batch.validate();
  return batch;
}

Envelope make_trajectory_msg(const std::string& experiment_id, double t_sim_s,
                             const TrajectoryBatch& batch) {
  return {Topic::Trajectory, kSchemaVersion, experiment_id, t_sim_s,
          batch_to_json(batch)};
}

TrajectoryBatch parse_trajectory(const Envelope& msg) {
  if (msg.topic != Topic::Trajectory)
    throw MalformedMessageError("expected a trajectory message");
  return batch_from_json(msg.payload);
}

Envelope make_scores_msg(const std::string& experiment_id, double t_sim_s,
                         const ScoresPayload& scores) {
  nlohmann::ordered_json payload;
  payload["control"] = stats_to_json(scores.control);
  payload["integration"] = similarity_to_json(scores.integration);
  return {Topic::Scores, kSchemaVersion, experiment_id, t_sim_s,
          std::move(payload)};
}

ScoresPayload parse_scores(const Envelope& msg) {
  if (msg.topic != Topic::Scores)
    throw MalformedMessageError("expected a scores message");
  ScoresPayload p;
  try {
    p.control = stats_from_json(msg.payload.at("control"));
    p.integration = similarity_from_json(msg.payload.at("integration"));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("bad scores payload: ") + e.what());
  }
  return p;
}

Envelope make_params_msg(const std::string& experiment_id, double t_sim_s,
                         const ParamsPayload& params) {
  nlohmann::ordered_json payload;
  payload["genome"] = params.genome;
  payload["round"] = params.round;
  payload["best_S"] = params.best_S;
  return {Topic::Params, kSchemaVersion, experiment_id, t_sim_s,
          std::move(payload)};
}

ParamsPayload parse_params(const Envelope& msg) {
  if (msg.topic != Topic::Params)
    throw MalformedMessageError("expected a params message");
  ParamsPayload p;
  try {
    const auto genome = msg.payload.at("genome").get<std::vector<double>>();
    if (genome.size() != kGenomeSize)
      throw MalformedMessageError("genome must have 18 entries");
    std::copy(genome.begin(), genome.end(), p.genome.begin());
    p.round = msg.payload.at("round").get<int>();
    p.best_S = msg.payload.at("best_S").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw MalformedMessageError(std::string("bad params payload: ") + e.what());
  }
  if (!genome_in_bounds(p.genome))
    throw MalformedMessageError("params genome out of bounds");
  return p;
}

Envelope make_ack_msg(const std::string& experiment_id, double t_sim_s,
                      int batch_index) {
  nlohmann::ordered_json payload;
  payload["batch_index"] = batch_index;
  return {Topic::Ack, kSchemaVersion, experiment_id, t_sim_s, std::move(payload)};
}

Envelope make_shutdown_msg(const std::string& experiment_id, double t_sim_s) {
  return {Topic::Shutdown, kSchemaVersion, experiment_id, t_sim_s,
          nlohmann::ordered_json::object()};
}

std::set<Topic> allowed_topics(const std::string& role) {
  if (role == "controller") return {Topic::Trajectory, Topic::Shutdown};
  if (role == "analyst") return {Topic::Scores, Topic::Ack, Topic::Shutdown};
  if (role == "calibrator") return {Topic::Params, Topic::Shutdown};
  throw ConfigError("unknown node role '" + role + "'");
}

// -- in-process hub ----------------------------------------------------------

struct InprocHub::Endpoint : Transport {
  InprocHub* hub;
  std::string role;
  std::set<Topic> publishable;
  std::set<Topic> subscriptions;
  std::mutex mutex;
  std::condition_variable cv;
  std::map<Topic, std::deque<Envelope>> queues;

  void publish(const Envelope& msg) override {
    if (!publishable.contains(msg.topic))
      throw TransportError("role '" + role + "' may not publish topic '" +
                           topic_name(msg.topic) + "'");
    hub->route(msg);
  }

  std::optional<Envelope> try_receive(Topic topic,
                                      std::chrono::milliseconds timeout) override {
    std::unique_lock lock(mutex);
    auto& q = queues[topic];
    if (!cv.wait_for(lock, timeout, [&] { return !q.empty(); }))
      return std::nullopt;
    Envelope msg = std::move(q.front());
    q.pop_front();
    return msg;
  }

  // Returns true when the oldest queued message had to be dropped.
  bool deliver(const Envelope& msg) {
    bool dropped = false;
    {
      std::lock_guard lock(mutex);
      auto& q = queues[msg.topic];
      if (q.size() >= kQueueCapacity) {
        q.pop_front();
        dropped = true;
      }
      q.push_back(msg);
    }
    cv.notify_all();
    return dropped;
  }
};

std::shared_ptr<Transport> InprocHub::endpoint(const std::string& role,
                                               const std::set<Topic>& subscriptions) {
  auto ep = std::make_shared<Endpoint>();
  ep->hub = this;
  ep->role = role;
  ep->publishable = allowed_topics(role);
  ep->subscriptions = subscriptions;
  std::lock_guard lock(mutex_);
  endpoints_.push_back(ep);
  return ep;
}

void InprocHub::route(const Envelope& msg) {
  std::lock_guard lock(mutex_);
  for (auto& weak : endpoints_) {
    if (auto ep = weak.lock()) {
      if (!ep->subscriptions.contains(msg.topic)) continue;
      if (ep->deliver(msg)) {
        ++dropped_;
        std::fprintf(stderr, "wire: queue full, dropped oldest '%s' at %s\n",
                     topic_name(msg.topic), ep->role.c_str());
      }
    }
  }
}

std::size_t InprocHub::dropped_count() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

}  // namespace fishcal::wire
