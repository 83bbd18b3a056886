#pragma once

#include <vector>

namespace zood::detail {

struct EmbeddedFixture {
  const char* name;
  const char* csv;
};

const std::vector<EmbeddedFixture>& embedded_fixtures();

}  // namespace zood::detail
