#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "grapht5/error.hpp"

namespace grapht5::chem {

// Errors carry the character offset into the SMILES string.
class LexError : public Error {
 public:
  LexError(const std::string &message, std::size_t offset)
      : Error(ErrorCategory::kLex, message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string &message, std::size_t offset)
      : Error(ErrorCategory::kParse, message + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedElementError : public Error {
 public:
  UnsupportedElementError(const std::string &symbol, std::size_t offset)
      : Error(ErrorCategory::kUnsupportedElement,
              "unsupported element '" + symbol + "' at offset " + std::to_string(offset)),
        symbol_(symbol) {}
  const std::string &symbol() const { return symbol_; }

 private:
  std::string symbol_;
};

enum class TokenKind {
  kAtom,
  kBracketAtom,
  kBond,
  kBranchOpen,
  kBranchClose,
  kRingDigit,
  kRingTwoDigit,
};

std::string_view token_kind_name(TokenKind kind);

struct SmilesToken {
  TokenKind kind;
  std::string text;  // exact source slice
  std::size_t position = 0;
};

enum class BondOrder : std::uint8_t { kSingle = 0, kDouble = 1, kTriple = 2, kAromatic = 3 };

std::string_view bond_order_name(BondOrder order);

struct Atom {
  std::string element;  // canonical capitalised symbol, "*" for a wildcard
  int atomic_number = 0;
  int formal_charge = 0;
  bool is_aromatic = false;
  int degree = 0;
  std::size_t index = 0;
};

struct Bond {
  std::size_t begin = 0;
  std::size_t end = 0;
  BondOrder order = BondOrder::kSingle;
};

// Integer feature schema consumed by the graph encoder.
//   atom: [atomic number 0..118, degree 0..10 (clamped), charge bucket 0..4
//          (charge clamped to [-2, 2], shifted by 2), aromatic 0/1]
//   bond: [order id 0..3]
inline constexpr std::size_t kAtomFeatureCount = 4;
inline constexpr std::size_t kBondFeatureCount = 1;
inline constexpr std::array<std::size_t, kAtomFeatureCount> kAtomFeatureVocab = {119, 11, 5, 2};
inline constexpr std::array<std::size_t, kBondFeatureCount> kBondFeatureVocab = {4};

using AtomFeatures = std::array<std::int32_t, kAtomFeatureCount>;
using BondFeatures = std::array<std::int32_t, kBondFeatureCount>;

struct Neighbor {
  std::size_t atom;
  std::size_t bond;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<AtomFeatures> atom_features;
  std::vector<BondFeatures> bond_features;

  std::size_t atom_count() const { return atoms.size(); }
  // N(i): neighbors of atom i with the connecting bond, in bond order.
  std::vector<std::vector<Neighbor>> adjacency() const;
};

// Maximal-munch lexer. Throws LexError on an unknown character, an
// unterminated bracket or a malformed %NN ring label.
std::vector<SmilesToken> tokenize_smiles(std::string_view smiles);

// Builds the molecular graph from a token list. Stereo markers, isotopes,
// hydrogen counts and atom classes are accepted and ignored. A '.' token
// separates disconnected fragments.
MolGraph parse_smiles(const std::vector<SmilesToken> &tokens);

MolGraph smiles_to_graph(std::string_view smiles);

// Recomputes degrees and the feature matrices from atoms and bonds.
void refresh_features(MolGraph &graph);

// Graph with atom i moved to index permutation[i]; bonds follow their atoms.
MolGraph relabel_atoms(const MolGraph &graph, const std::vector<std::size_t> &permutation);

// Edge-list text dump: `atom idx element charge aromatic` lines, then
// `bond i j order` lines.
std::string dump_graph(const MolGraph &graph);

// Atomic number for a capitalised element symbol ("*" -> 0), or -1.
int atomic_number(std::string_view symbol);

}  // namespace grapht5::chem
