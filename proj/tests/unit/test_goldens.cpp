#include <doctest.h>

#include <fstream>
#include <sstream>

#include "reflact/backbones.hpp"

using namespace reflact::backbones;
using reflact::world::EnvFlavor;
using reflact::world::TaskType;

namespace {

std::string golden(const std::string& rel) {
  std::ifstream in(std::string(REFLACT_SOURCE_DIR "/tests/golden/") + rel, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden " << rel);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct Source {
  EnvFlavor flavor;
  const char* name;
  std::vector<TaskType> types;
};

}  // namespace

TEST_CASE("system prompts match goldens") {
  for (EnvFlavor flavor : {EnvFlavor::household, EnvFlavor::science}) {
    for (BackboneKind kind : kAllKinds) {
      const std::string rel =
          "system_prompt/" + std::string(to_string(flavor)) + "/" + std::string(to_string(kind)) + ".txt";
      INFO(rel);
      CHECK(system_prompt({kind, {}}, flavor) == golden(rel));
    }
  }
}

TEST_CASE("example transcripts match goldens") {
  const Source sources[] = {
      {EnvFlavor::household, "put", {TaskType::put, TaskType::put_two, TaskType::examine}},
      {EnvFlavor::household, "clean", {TaskType::clean, TaskType::heat, TaskType::cool}},
      {EnvFlavor::science, "chemistry", {TaskType::put, TaskType::clean, TaskType::heat, TaskType::cool}},
  };
  for (const auto& src : sources) {
    for (BackboneKind kind : kAllKinds) {
      const std::string rel = "icl/" + std::string(to_string(src.flavor)) + "/" + src.name + "/" +
                              std::string(to_string(kind)) + ".txt";
      const std::string expected = golden(rel);
      for (TaskType type : src.types) {
        INFO(rel << " as " << reflact::world::to_string(type));
        CHECK(render_transcript(icl_transcript(kind, load_icl(src.flavor, type))) == expected);
      }
    }
  }
}
