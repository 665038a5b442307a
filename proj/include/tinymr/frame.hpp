// Framed byte-stream transport and message encodings for the master/worker
// and data protocols.
//
// Frame layout is fixed: a 4-byte big-endian length, one type byte, then
// the payload; length = payload bytes + 1. Payload scalars are
// little-endian, matching the sample payload convention.

#ifndef TINYMR_FRAME_HPP
#define TINYMR_FRAME_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tinymr/sizing.hpp"
#include "tinymr/workload.hpp"

namespace tinymr {

enum class FrameType : std::uint8_t {
  kRegister = 1,
  kKneepoint = 2,  // job setup: spec, sizing report, plan, manifest
  kTask = 3,
  kResult = 4,
  kGet = 5,
  kPut = 6,
  kMonitor = 7,
  kAbort = 8,
  kDone = 9,
  kHeartbeat = 10,
};

struct Frame {
  FrameType type = FrameType::kAbort;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);
// Parses one frame from a buffer; returns consumed byte count, 0 if more
// bytes are needed.
std::size_t decode_frame(const std::uint8_t* data, std::size_t len, Frame* out);

// Little-endian payload writer/reader.
class PayloadWriter {
 public:
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(const std::string& s);
  void bytes(const std::uint8_t* data, std::size_t len);
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class PayloadReader {
 public:
  PayloadReader(const std::uint8_t* data, std::size_t len)
      : data_(data), len_(len) {}
  explicit PayloadReader(const std::vector<std::uint8_t>& buf)
      : PayloadReader(buf.data(), buf.size()) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  std::vector<std::uint8_t> rest();
  std::size_t remaining() const { return len_ - pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

// Blocking framed connection over a socket fd. Owns the fd.
class FrameConn {
 public:
  explicit FrameConn(int fd) : fd_(fd) {}
  FrameConn(const FrameConn&) = delete;
  FrameConn& operator=(const FrameConn&) = delete;
  FrameConn(FrameConn&& other) noexcept;
  ~FrameConn();

  // nullopt on EOF or timeout; throws on protocol violations.
  std::optional<Frame> read_frame(double timeout_ms = 0.0);
  bool write_frame(const Frame& frame);  // false once the peer is gone
  void close();
  bool closed() const { return fd_ < 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

// Loopback-friendly TCP plumbing. Address format "host:port".
int tcp_listen(const std::string& addr, std::uint16_t* bound_port = nullptr);
int tcp_accept(int listen_fd, double timeout_ms = 0.0);  // -1 on timeout
int tcp_connect(const std::string& addr, double timeout_ms = 2000.0);

// --- message payloads -----------------------------------------------------

struct SetupMsg {
  std::uint64_t node_id = 0;
  SubsampleSpec spec;
  KneepointReport report;
  std::uint64_t plan_seed = 0;
  std::uint32_t prefetch_margin = 1;
  bool monitor_enabled = false;
  double fetch_deadline_ms = 2000.0;
  std::vector<std::pair<std::uint64_t, std::string>> data_nodes;  // id, addr
  std::string manifest_text;
};

struct TaskMsg {
  std::uint64_t task_id = 0;
  RepetitionRange repetitions;
  bool outlier = false;
  std::vector<std::uint64_t> sample_ids;
};

struct ResultMsg {
  std::uint64_t task_id = 0;
  double exec_ms = 0.0;
  double fetch_ms = 0.0;
  double stall_ms = 0.0;
  std::vector<IntermediateResult> items;
};

struct MonitorMsg {
  std::uint64_t node_id = 0;
  std::uint64_t tasks_done = 0;
  std::uint32_t queue_depth = 0;
  double fetch_p95_ms = 0.0;
};

Frame encode_setup(const SetupMsg& m);
SetupMsg decode_setup(const Frame& f);
Frame encode_task(const TaskMsg& m);
TaskMsg decode_task(const Frame& f);
Frame encode_result(const ResultMsg& m);
ResultMsg decode_result(const Frame& f);
Frame encode_monitor(const MonitorMsg& m);
MonitorMsg decode_monitor(const Frame& f);

}  // namespace tinymr

#endif  // TINYMR_FRAME_HPP
