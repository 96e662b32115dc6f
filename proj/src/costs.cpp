#include "duat/costs.hpp"

namespace duat {

namespace {
CostMeter*& active_slot() {
  thread_local CostMeter* active = nullptr;
  return active;
}

std::string join_stack(const std::vector<std::string>& stack) {
  std::string path;
  for (const auto& s : stack) {
    if (!path.empty()) path += '.';
    path += s;
  }
  return path;
}
}  // namespace

CostMeter* CostMeter::active() { return active_slot(); }

CostMeter::Use::Use(CostMeter& m) : prev_(active_slot()) { active_slot() = &m; }
CostMeter::Use::~Use() { active_slot() = prev_; }

CostMeter::Section::Section(const std::string& name) {
  if (CostMeter* m = active()) m->push_section(name);
}
CostMeter::Section::~Section() {
  if (CostMeter* m = active()) m->pop_section();
}

void CostMeter::add_macs(std::int64_t m) {
  total_ += m;
  if (stack_.empty()) return;
  const std::string path = join_stack(stack_);
  for (auto& [name, macs] : sections_) {
    if (name == path) {
      macs += m;
      return;
    }
  }
  sections_.emplace_back(path, m);
}

void CostMeter::push_section(const std::string& name) { stack_.push_back(name); }
void CostMeter::pop_section() { stack_.pop_back(); }

}  // namespace duat
