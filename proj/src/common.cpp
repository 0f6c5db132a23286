#include "difache/common.hpp"

namespace difache {

std::string to_string(NodeId n) {
  const char* p = n.kind == NodeKind::kCompute ? "CN" : n.kind == NodeKind::kMemory ? "MN" : "MGR";
  return p + std::to_string(n.id);
}

const char* to_string(FabricStatus s) {
  switch (s) {
    case FabricStatus::kOk: return "ok";
    case FabricStatus::kNodeDead: return "node dead";
    case FabricStatus::kOutOfBounds: return "out of bounds";
    case FabricStatus::kMisaligned: return "misaligned";
  }
  return "?";
}

}  // namespace difache
