#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fishcal/model.hpp"
#include "fishcal/stats.hpp"

#include "json.hpp"

namespace fishcal::wire {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kQueueCapacity = 64;

enum class Topic { Trajectory, Scores, Params, Ack, Shutdown };

const char* topic_name(Topic t);
Topic topic_from_name(const std::string& name);  // throws UnknownTopicError

struct Envelope {
  Topic topic = Topic::Shutdown;
  int schema_version = kSchemaVersion;
  std::string experiment_id;
  double t_sim_s = 0.0;
  nlohmann::ordered_json payload;

  bool operator==(const Envelope& o) const = default;
};

/// Single-line JSON, UTF-8, LF-terminated; field order topic, schema_version,
/// experiment_id, t_sim_s, payload.
std::string encode(const Envelope& msg);

/// Inverse of encode. Throws MalformedMessageError, VersionMismatchError,
/// UnknownTopicError.
Envelope decode(std::string_view line);

// -- payload codecs ----------------------------------------------------------

nlohmann::ordered_json batch_to_json(const TrajectoryBatch& batch);
TrajectoryBatch batch_from_json(const nlohmann::json& j);

Envelope make_trajectory_msg(const std::string& experiment_id, double t_sim_s,
                             const TrajectoryBatch& batch);
TrajectoryBatch parse_trajectory(const Envelope& msg);

struct ScoresPayload {
  BehaviorStats control;
  SimilarityReport integration;
};
Envelope make_scores_msg(const std::string& experiment_id, double t_sim_s,
                         const ScoresPayload& scores);
ScoresPayload parse_scores(const Envelope& msg);

struct ParamsPayload {
  Genome genome{};
  int round = 0;
  double best_S = 0.0;
};
Envelope make_params_msg(const std::string& experiment_id, double t_sim_s,
                         const ParamsPayload& params);
ParamsPayload parse_params(const Envelope& msg);  // validates bounds

Envelope make_ack_msg(const std::string& experiment_id, double t_sim_s,
                      int batch_index);
Envelope make_shutdown_msg(const std::string& experiment_id, double t_sim_s);

// -- transport ---------------------------------------------------------------

/// Topology contract: who may publish what.
///   controller -> trajectory; analyst -> scores, ack; calibrator -> params;
///   anyone -> shutdown.
std::set<Topic> allowed_topics(const std::string& role);

/// One endpoint of the pub/sub fabric. Delivery is at-most-once per
/// subscriber; per-topic publication order is preserved.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void publish(const Envelope& msg) = 0;
  virtual std::optional<Envelope> try_receive(Topic topic,
                                              std::chrono::milliseconds timeout) = 0;
};

/// In-process hub. Each endpoint owns bounded per-topic queues
/// (drop-oldest on overflow, counted).
class InprocHub {
 public:
  std::shared_ptr<Transport> endpoint(const std::string& role,
                                      const std::set<Topic>& subscriptions);
  std::size_t dropped_count() const;

 private:
  struct Endpoint;
  friend struct Endpoint;
  void route(const Envelope& msg);

  mutable std::mutex mutex_;
  std::vector<std::weak_ptr<Endpoint>> endpoints_;
  std::size_t dropped_ = 0;
};

/// TCP line-delimited transport. The node binds a listening socket per topic
/// it publishes and connects (with retry) to the endpoints of topics it
/// subscribes to. Endpoint map: topic name -> "host:port".
class SocketTransport : public Transport {
 public:
  SocketTransport(const std::string& role,
                  const std::map<std::string, std::string>& endpoints,
                  const std::set<Topic>& subscriptions,
                  std::chrono::milliseconds connect_timeout =
                      std::chrono::milliseconds(10000));
  ~SocketTransport() override;

  void publish(const Envelope& msg) override;
  std::optional<Envelope> try_receive(Topic topic,
                                      std::chrono::milliseconds timeout) override;

  /// Blocks until `count` subscribers are connected to the published topic.
  bool wait_for_subscribers(Topic topic, std::size_t count,
                            std::chrono::milliseconds timeout);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace fishcal::wire
