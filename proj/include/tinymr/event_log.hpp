// Scheduling event log shared by the runtime and the simulator.
// CSV layout: timestamp_ms,event,node_id,task_id

#ifndef TINYMR_EVENT_LOG_HPP
#define TINYMR_EVENT_LOG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace tinymr {

struct Event {
  double timestamp_ms = 0.0;
  std::string event;
  std::uint64_t node_id = 0;
  std::uint64_t task_id = 0;
};

class EventLog {
 public:
  void record(double timestamp_ms, std::string event, std::uint64_t node_id,
              std::uint64_t task_id) {
    rows_.push_back({timestamp_ms, std::move(event), node_id, task_id});
  }

  const std::vector<Event>& rows() const { return rows_; }
  std::size_t count(const std::string& event) const;

  std::string to_csv() const;
  void save(const std::string& path) const;

 private:
  std::vector<Event> rows_;
};

}  // namespace tinymr

#endif  // TINYMR_EVENT_LOG_HPP
