#pragma once

#include <string_view>

namespace skillmatch::assets {

std::string_view datagen_template();
std::string_view natural_rerank_template();
std::string_view code_rerank_template();

}  // namespace skillmatch::assets
