#pragma once

// Text checkpoint of the unfolded network:
//
//   uwmmse-checkpoint 1
//   network M <M> R <R> T <T> d <d> sigma <x> pmax <x> v_convention <name> alpha <n> <a...>
//   hyper F <F> G <G> Fp <F'> P <P> K_train <K>
//   block <name> <rows> <cols>
//   <re> <im>                       one line per entry, row-major
//   ...
//   hash <16 hex digits>            FNV-1a 64 of every byte above this line
//
// Numbers carry 17 significant digits, so a round trip is value-exact.

#include <filesystem>
#include <string>

#include "uwmmse/channel.hpp"
#include "uwmmse/model.hpp"

namespace uwmmse::checkpoint {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  model::ModelParams params;
  channel::NetworkConfig network;
};

std::string encode(const model::ModelParams& params, const channel::NetworkConfig& network);
// Throws FormatError on version, hash or shape mismatch.
Checkpoint decode(const std::string& text);

// Throws std::ios_base::failure when the file cannot be written or read.
void save(const std::filesystem::path& path, const model::ModelParams& params,
          const channel::NetworkConfig& network);
Checkpoint load(const std::filesystem::path& path);

}  // namespace uwmmse::checkpoint
