#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstring>
#include <thread>

#include "fishcal/errors.hpp"
#include "fishcal/wire.hpp"

namespace fishcal::wire {

namespace {

struct HostPort {
  std::string host;
  std::uint16_t port;
};

HostPort parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw ConfigError("endpoint '" + s + "' must be host:port");
  const std::string host = s.substr(0, colon);
  const int port = std::stoi(s.substr(colon + 1));
  if (port <= 0 || port > 65535)
    throw ConfigError("endpoint '" + s + "' has an invalid port");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

sockaddr_in make_addr(const HostPort& hp) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(hp.port);
  if (::inet_pton(AF_INET, hp.host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("cannot parse host '" + hp.host + "'");
  return addr;
}

}  // namespace

struct SocketTransport::Impl {
  std::string role;
  std::atomic<bool> stopping{false};

  // Published topics: one listener each, fanning out to connected clients.
  struct Listener {
    Topic topic;
    int fd = -1;
    std::thread acceptor;
    std::mutex mutex;
    std::vector<int> clients;
  };
  std::vector<std::unique_ptr<Listener>> listeners;

  // Subscribed topics: one reader connection each.
  struct Reader {
    int fd = -1;
    std::thread thread;
  };
  std::vector<Reader> readers;

  // Incoming messages, dispatched by envelope topic.
  std::mutex in_mutex;
  std::condition_variable in_cv;
  std::map<Topic, std::deque<Envelope>> inbox;
  std::size_t dropped = 0;

  void deliver(Envelope msg) {
    {
      std::lock_guard lock(in_mutex);
      auto& q = inbox[msg.topic];
      if (q.size() >= kQueueCapacity) {
        q.pop_front();
        ++dropped;
        std::fprintf(stderr, "wire: queue full, dropped oldest '%s' at %s\n",
                     topic_name(msg.topic), role.c_str());
      }
      q.push_back(std::move(msg));
    }
    in_cv.notify_all();
  }

  void accept_loop(Listener* l) {
    while (!stopping.load()) {
      const int client = ::accept(l->fd, nullptr, nullptr);
      if (client < 0) {
        if (stopping.load()) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      const int one = 1;
      ::setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard lock(l->mutex);
      l->clients.push_back(client);
    }
  }

  void read_loop(int fd) {
    std::string buffer;
    char chunk[4096];
    while (!stopping.load()) {
      const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
      if (n <= 0) return;
      buffer.append(chunk, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = buffer.find('\n')) != std::string::npos) {
        const std::string line = buffer.substr(0, pos);
        buffer.erase(0, pos + 1);
        if (line.empty()) continue;
        try {
          deliver(decode(line));
        } catch (const std::exception& e) {
          std::fprintf(stderr, "wire: %s ignored a bad message: %s\n",
                       role.c_str(), e.what());
        }
      }
    }
  }
};

SocketTransport::SocketTransport(const std::string& role,
                                 const std::map<std::string, std::string>& endpoints,
                                 const std::set<Topic>& subscriptions,
                                 std::chrono::milliseconds connect_timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->role = role;
  const std::set<Topic> publishable = allowed_topics(role);

  // Bind one listener per published topic present in the endpoint map
  // (shutdown rides on every channel rather than having its own).
  for (Topic t : publishable) {
    if (t == Topic::Shutdown) continue;
    const auto it = endpoints.find(topic_name(t));
    if (it == endpoints.end())
      throw ConfigError(std::string("no endpoint configured for topic '") +
                        topic_name(t) + "'");
    const HostPort hp = parse_endpoint(it->second);
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("socket() failed");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = make_addr(hp);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw TransportError("cannot bind " + it->second + " for topic " +
                           topic_name(t));
    }
    if (::listen(fd, 8) != 0) {
      ::close(fd);
      throw TransportError("cannot listen on " + it->second);
    }
    auto listener = std::make_unique<Impl::Listener>();
    listener->topic = t;
    listener->fd = fd;
    impl_->listeners.push_back(std::move(listener));
  }
  for (auto& l : impl_->listeners) {
    l->acceptor = std::thread([impl = impl_.get(), lp = l.get()] {
      impl->accept_loop(lp);
    });
  }

  // Connect to the publishers of subscribed topics, retrying until timeout.
  for (Topic t : subscriptions) {
    if (t == Topic::Shutdown) continue;  // arrives on subscribed channels
    const auto it = endpoints.find(topic_name(t));
    if (it == endpoints.end())
      throw ConfigError(std::string("no endpoint configured for topic '") +
                        topic_name(t) + "'");
    const HostPort hp = parse_endpoint(it->second);
    sockaddr_in addr = make_addr(hp);
    const auto deadline = std::chrono::steady_clock::now() + connect_timeout;
    int fd = -1;
    for (;;) {
      fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw TransportError("socket() failed");
      if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0)
        break;
      ::close(fd);
      fd = -1;
      if (std::chrono::steady_clock::now() >= deadline)
        throw TransportError("cannot connect to " + it->second + " for topic " +
                             topic_name(t));
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    Impl::Reader reader;
    reader.fd = fd;
    impl_->readers.push_back(std::move(reader));
  }
  for (auto& r : impl_->readers) {
    r.thread = std::thread([impl = impl_.get(), fd = r.fd] { impl->read_loop(fd); });
  }
}

SocketTransport::~SocketTransport() {
  impl_->stopping.store(true);
  for (auto& l : impl_->listeners) {
    ::shutdown(l->fd, SHUT_RDWR);
    ::close(l->fd);
    std::lock_guard lock(l->mutex);
    for (int c : l->clients) {
      ::shutdown(c, SHUT_RDWR);
      ::close(c);
    }
  }
  for (auto& r : impl_->readers) {
    ::shutdown(r.fd, SHUT_RDWR);
  }
  for (auto& l : impl_->listeners)
    if (l->acceptor.joinable()) l->acceptor.join();
  for (auto& r : impl_->readers) {
    if (r.thread.joinable()) r.thread.join();
    ::close(r.fd);
  }
}

void SocketTransport::publish(const Envelope& msg) {
  if (!allowed_topics(impl_->role).contains(msg.topic))
    throw TransportError("role '" + impl_->role + "' may not publish topic '" +
                         topic_name(msg.topic) + "'");
  const std::string line = encode(msg);
  for (auto& l : impl_->listeners) {
    if (msg.topic != Topic::Shutdown && l->topic != msg.topic) continue;
    std::lock_guard lock(l->mutex);
    for (auto it = l->clients.begin(); it != l->clients.end();) {
      const ssize_t n = ::send(*it, line.data(), line.size(), MSG_NOSIGNAL);
      if (n != static_cast<ssize_t>(line.size())) {
        ::close(*it);
        it = l->clients.erase(it);
      } else {
        ++it;
      }
    }
  }
}

std::optional<Envelope> SocketTransport::try_receive(
    Topic topic, std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->in_mutex);
  auto& q = impl_->inbox[topic];
  if (!impl_->in_cv.wait_for(lock, timeout, [&] { return !q.empty(); }))
    return std::nullopt;
  Envelope msg = std::move(q.front());
  q.pop_front();
  return msg;
}

bool SocketTransport::wait_for_subscribers(Topic topic, std::size_t count,
                                           std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    for (auto& l : impl_->listeners) {
      if (l->topic != topic) continue;
      std::lock_guard lock(l->mutex);
      if (l->clients.size() >= count) return true;
    }
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

}  // namespace fishcal::wire
