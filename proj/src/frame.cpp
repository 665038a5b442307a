#include "tinymr/frame.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>

namespace tinymr {

namespace {

constexpr std::size_t kMaxFrameBytes = 1ull << 30;

void append_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(frame.payload.size() + 5);
  append_u32_be(out, static_cast<std::uint32_t>(frame.payload.size() + 1));
  out.push_back(static_cast<std::uint8_t>(frame.type));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

std::size_t decode_frame(const std::uint8_t* data, std::size_t len,
                         Frame* out) {
  if (len < 5) return 0;
  std::uint32_t length = read_u32_be(data);
  if (length < 1 || length > kMaxFrameBytes)
    throw std::runtime_error("bad frame length");
  std::size_t total = 4 + length;
  if (len < total) return 0;
  out->type = static_cast<FrameType>(data[4]);
  out->payload.assign(data + 5, data + total);
  return total;
}

void PayloadWriter::u8(std::uint8_t v) { buf_.push_back(v); }

void PayloadWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PayloadWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void PayloadWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void PayloadWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void PayloadWriter::bytes(const std::uint8_t* data, std::size_t len) {
  buf_.insert(buf_.end(), data, data + len);
}

std::uint8_t PayloadReader::u8() {
  if (pos_ + 1 > len_) throw std::runtime_error("truncated payload");
  return data_[pos_++];
}

std::uint32_t PayloadReader::u32() {
  if (pos_ + 4 > len_) throw std::runtime_error("truncated payload");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t PayloadReader::u64() {
  if (pos_ + 8 > len_) throw std::runtime_error("truncated payload");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
  return v;
}

double PayloadReader::f64() {
  std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string PayloadReader::str() {
  std::uint32_t n = u32();
  if (pos_ + n > len_) throw std::runtime_error("truncated payload");
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

std::vector<std::uint8_t> PayloadReader::rest() {
  std::vector<std::uint8_t> out(data_ + pos_, data_ + len_);
  pos_ = len_;
  return out;
}

FrameConn::FrameConn(FrameConn&& other) noexcept : fd_(other.fd_) {
  other.fd_ = -1;
}

FrameConn::~FrameConn() { close(); }

void FrameConn::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

std::optional<Frame> FrameConn::read_frame(double timeout_ms) {
  if (fd_ < 0) return std::nullopt;

  std::uint8_t header[5];
  std::size_t got = 0;
  bool first = true;
  while (got < sizeof header) {
    if (timeout_ms > 0.0 && first) {
      struct pollfd pfd {fd_, POLLIN, 0};
      int rc = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
      if (rc == 0) return std::nullopt;  // timeout with no frame started
      if (rc < 0) {
        if (errno == EINTR) continue;
        return std::nullopt;
      }
    }
    ssize_t n = ::recv(fd_, header + got, sizeof header - got, 0);
    if (n == 0) return std::nullopt;  // EOF
    if (n < 0) {
      if (errno == EINTR) continue;
      return std::nullopt;
    }
    got += static_cast<std::size_t>(n);
    first = false;
  }

  std::uint32_t length = read_u32_be(header);
  if (length < 1 || length > kMaxFrameBytes)
    throw std::runtime_error("bad frame length");

  Frame frame;
  frame.type = static_cast<FrameType>(header[4]);
  frame.payload.resize(length - 1);
  std::size_t need = frame.payload.size();
  std::size_t off = 0;
  while (off < need) {
    ssize_t n = ::recv(fd_, frame.payload.data() + off, need - off, 0);
    if (n == 0) return std::nullopt;
    if (n < 0) {
      if (errno == EINTR) continue;
      return std::nullopt;
    }
    off += static_cast<std::size_t>(n);
  }
  return frame;
}

bool FrameConn::write_frame(const Frame& frame) {
  if (fd_ < 0) return false;
  auto bytes = encode_frame(frame);
  std::size_t off = 0;
  while (off < bytes.size()) {
    ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

namespace {

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("address must be host:port");
  std::string host = addr.substr(0, colon);
  int port = std::stoi(addr.substr(colon + 1));
  if (port < 0 || port > 65535) throw std::invalid_argument("bad port");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

sockaddr_in make_sockaddr(const std::string& host, std::uint16_t port) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(port);
  if (host == "0.0.0.0") {
    sa.sin_addr.s_addr = INADDR_ANY;
  } else if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
    throw std::invalid_argument("bad host address: " + host);
  }
  return sa;
}

}  // namespace

int tcp_listen(const std::string& addr, std::uint16_t* bound_port) {
  auto [host, port] = split_addr(addr);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in sa = make_sockaddr(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
    ::close(fd);
    throw std::runtime_error("bind failed on " + addr);
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    throw std::runtime_error("listen failed on " + addr);
  }
  if (bound_port) {
    socklen_t len = sizeof sa;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    *bound_port = ntohs(sa.sin_port);
  }
  return fd;
}

int tcp_accept(int listen_fd, double timeout_ms) {
  if (timeout_ms > 0.0) {
    struct pollfd pfd {listen_fd, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
    if (rc <= 0) return -1;
  }
  return ::accept(listen_fd, nullptr, nullptr);
}

int tcp_connect(const std::string& addr, double timeout_ms) {
  auto [host, port] = split_addr(addr);
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("socket() failed");
  sockaddr_in sa = make_sockaddr(host == "0.0.0.0" ? "127.0.0.1" : host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
    ::close(fd);
    return -1;
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  (void)timeout_ms;
  return fd;
}

Frame encode_setup(const SetupMsg& m) {
  PayloadWriter w;
  w.u64(m.node_id);
  w.f64(m.spec.fraction);
  w.u32(m.spec.repetitions);
  w.f64(m.spec.confidence);
  w.u64(m.spec.seed);
  w.u64(m.report.kneepoint_bytes);
  w.u32(m.report.samples_per_task);
  w.u64(m.report.avg_sample_size_bytes);
  w.u64(m.plan_seed);
  w.u32(m.prefetch_margin);
  w.u8(m.monitor_enabled ? 1 : 0);
  w.f64(m.fetch_deadline_ms);
  w.u32(static_cast<std::uint32_t>(m.data_nodes.size()));
  for (const auto& [id, addr] : m.data_nodes) {
    w.u64(id);
    w.str(addr);
  }
  w.str(m.manifest_text);
  return Frame{FrameType::kKneepoint, w.take()};
}

SetupMsg decode_setup(const Frame& f) {
  PayloadReader r(f.payload);
  SetupMsg m;
  m.node_id = r.u64();
  m.spec.fraction = r.f64();
  m.spec.repetitions = r.u32();
  m.spec.confidence = r.f64();
  m.spec.seed = r.u64();
  m.report.kneepoint_bytes = r.u64();
  m.report.samples_per_task = r.u32();
  m.report.avg_sample_size_bytes = r.u64();
  m.plan_seed = r.u64();
  m.prefetch_margin = r.u32();
  m.monitor_enabled = r.u8() != 0;
  m.fetch_deadline_ms = r.f64();
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint64_t id = r.u64();
    m.data_nodes.emplace_back(id, r.str());
  }
  m.manifest_text = r.str();
  return m;
}

Frame encode_task(const TaskMsg& m) {
  PayloadWriter w;
  w.u64(m.task_id);
  w.u32(m.repetitions.first);
  w.u32(m.repetitions.last);
  w.u8(m.outlier ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(m.sample_ids.size()));
  for (std::uint64_t id : m.sample_ids) w.u64(id);
  return Frame{FrameType::kTask, w.take()};
}

TaskMsg decode_task(const Frame& f) {
  PayloadReader r(f.payload);
  TaskMsg m;
  m.task_id = r.u64();
  m.repetitions.first = r.u32();
  m.repetitions.last = r.u32();
  m.outlier = r.u8() != 0;
  std::uint32_t n = r.u32();
  m.sample_ids.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) m.sample_ids[i] = r.u64();
  return m;
}

Frame encode_result(const ResultMsg& m) {
  PayloadWriter w;
  w.u64(m.task_id);
  w.f64(m.exec_ms);
  w.f64(m.fetch_ms);
  w.f64(m.stall_ms);
  w.u32(static_cast<std::uint32_t>(m.items.size()));
  for (const IntermediateResult& it : m.items) {
    w.u64(it.sample_id);
    w.u32(it.repetition_index);
    w.f64(it.statistic);
    w.u64(it.count);
  }
  return Frame{FrameType::kResult, w.take()};
}

ResultMsg decode_result(const Frame& f) {
  PayloadReader r(f.payload);
  ResultMsg m;
  m.task_id = r.u64();
  m.exec_ms = r.f64();
  m.fetch_ms = r.f64();
  m.stall_ms = r.f64();
  std::uint32_t n = r.u32();
  m.items.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    m.items[i].sample_id = r.u64();
    m.items[i].repetition_index = r.u32();
    m.items[i].statistic = r.f64();
    m.items[i].count = r.u64();
  }
  return m;
}

Frame encode_monitor(const MonitorMsg& m) {
  PayloadWriter w;
  w.u64(m.node_id);
  w.u64(m.tasks_done);
  w.u32(m.queue_depth);
  w.f64(m.fetch_p95_ms);
  return Frame{FrameType::kMonitor, w.take()};
}

MonitorMsg decode_monitor(const Frame& f) {
  PayloadReader r(f.payload);
  MonitorMsg m;
  m.node_id = r.u64();
  m.tasks_done = r.u64();
  m.queue_depth = r.u32();
  m.fetch_p95_ms = r.f64();
  return m;
}

}  // namespace tinymr
