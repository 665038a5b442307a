#include "tinymr/event_log.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tinymr {

std::size_t EventLog::count(const std::string& event) const {
  std::size_t n = 0;
  for (const Event& e : rows_)
    if (e.event == event) ++n;
  return n;
}

std::string EventLog::to_csv() const {
  std::ostringstream out;
  out << "timestamp_ms,event,node_id,task_id\n";
  char buf[64];
  for (const Event& e : rows_) {
    std::snprintf(buf, sizeof buf, "%.3f", e.timestamp_ms);
    out << buf << ',' << e.event << ',' << e.node_id << ',' << e.task_id
        << '\n';
  }
  return out.str();
}

void EventLog::save(const std::string& path) const {
  std::ofstream f(path);
  f << to_csv();
  if (!f) throw std::runtime_error("failed to write event log: " + path);
}

}  // namespace tinymr
