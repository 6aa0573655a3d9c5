#pragma once

#include <memory>
#include <span>
#include <string>

#include "saratoga/wire.hpp"

namespace saratoga {

/// Incremental SHA-256 over the transfer contents.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;
  Sha256(const Sha256&);
  Sha256& operator=(const Sha256&);

  void update(std::span<const std::uint8_t> bytes);
  /// Returns the digest; the object must not be updated afterwards.
  wire::Digest finish();

  static wire::Digest of(std::span<const std::uint8_t> bytes);

 private:
  struct Ctx;
  std::unique_ptr<Ctx> ctx_;
};

std::string digest_hex(const wire::Digest& d);

}  // namespace saratoga
