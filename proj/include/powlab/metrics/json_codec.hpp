#pragma once

#include <json.hpp>

#include "powlab/core/block.hpp"
#include "powlab/core/block_tree.hpp"

namespace powlab {

using json = nlohmann::json;

/// Hex hashes (0x-prefixed), decimal integers.
json block_to_json(const Block& block);
Block block_from_json(const json& j);

json summary_to_json(const BlockSummary& s);
json chain_view_to_json(const ChainView& view);

BlockHash hash_from_json(const json& j);

}  // namespace powlab
