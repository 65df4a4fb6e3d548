#pragma once

// Place-name directory. Every alternate spelling is its own Place record
// (sharing the placeId), and five composite orderings (akplace1..5) serve
// the name/state/country/type search combinations:
//
//   criteria present             index      access
//   name, type, name+type        akplace1   (img, alt, type); type filtered
//   country+state+name [+type]   akplace2   (img, c, s, alt, type); type filtered
//   country+state [+type]        akplace3   (img, c, s, type, alt); 12-way merge without type
//   country+name [+type]         akplace4   (img, c, alt, type); type filtered
//   country [+type]              akplace5   (img, c, type, alt); 12-way merge without type
//
// A state without a country implies country USA. Image-bearing places sort
// first; within each flag value rows order by case-folded alternate name,
// then feature type. The index only changes access cost, never results.
//
// Source file format, one record per line ('#' starts a comment):
//   @country|<countryId>|<alias>
//   @state|<countryId>|<stateId>|<alias>
//   <placeId>|<name>|<alternateName>|<countryId>|<stateId or empty>|<typeId>|<lat>|<lon>
// Country and state ids are also accepted as their own aliases.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "terratile/common.hpp"
#include "terratile/spatial_index.hpp"

namespace terratile {

struct FeatureType {
  int id;
  std::string_view description;
};

inline constexpr std::array<FeatureType, 12> kFeatureTypes{{
    {1, "Airport/Railroad Station"},
    {2, "Bay/Gulf"},
    {3, "Cape/Peninsula"},
    {4, "City"},
    {5, "Hill/Mountain"},
    {6, "Island"},
    {7, "Lake"},
    {8, "Other Land Feature"},
    {9, "Other Water Feature"},
    {10, "Park/Beach"},
    {11, "Point of Interest"},
    {12, "River"},
}};

/// Accepts the numeric id, the full description, or one '/'-separated part
/// of it ("Airport"), case-insensitively.
std::optional<int> match_feature_type(std::string_view text);
std::string_view feature_type_name(int id);

inline constexpr double kNearestPlaceRadiusM = 50000.0;
inline constexpr std::size_t kGazetteerPageSize = 10;

struct Place {
  std::uint32_t row = 0;  // position in load order
  std::uint64_t place_id = 0;
  std::string name;
  std::string alternate_name;
  std::string country;  // country id
  std::string state;    // state id, empty if none
  int feature_type = 0;
  double lat = 0.0;
  double lon = 0.0;
  GridKey zgrid;
  std::optional<GridKey> ugrid;
  Date usgs_date;
  Date spin2_date;

  bool image_flag() const { return !usgs_date.empty() || !spin2_date.empty(); }
};

struct GazetteerCounts {
  std::size_t places = 0;
  std::size_t countries = 0;
  std::size_t states = 0;
  std::size_t feature_types = 0;
};

struct SearchCriteria {
  std::optional<std::string> name;
  std::optional<std::string> state;
  std::optional<std::string> country;
  std::optional<std::string> feature_type;
  std::optional<std::string> cursor;

  bool empty() const { return !name && !state && !country && !feature_type; }
};

enum class PlaceIndex { AkPlace1, AkPlace2, AkPlace3, AkPlace4, AkPlace5, PlaceId, UGrid, ZGrid };

std::string_view to_string(PlaceIndex index);

/// Access path for a criteria combination (see the table above).
PlaceIndex pick_index(const SearchCriteria& criteria);

struct SearchPage {
  std::vector<Place> rows;
  std::optional<std::string> next_cursor;
  PlaceIndex index = PlaceIndex::AkPlace1;
  std::size_t rows_examined = 0;  // index entries read, including filtered ones
};

/// Full result ordering: image-bearing first, folded alternate name, type,
/// then raw name, place id and row as tie breakers.
using PlaceOrderKey = std::tuple<int, std::string, int, std::string, std::uint64_t, std::uint32_t>;
PlaceOrderKey place_order_key(const Place& place);

struct ImageRegistration {
  GridKey grid;
  Date acquired;
};

class Gazetteer {
 public:
  Gazetteer();
  Gazetteer(Gazetteer&&) noexcept;
  Gazetteer& operator=(Gazetteer&&) noexcept;
  ~Gazetteer();

  /// Throws FormatError (with line number) on malformed lines or dangling
  /// country/state/type references.
  static Gazetteer parse(std::string_view text);
  static Gazetteer load(const std::filesystem::path& path);

  GazetteerCounts counts() const;

  /// Up to page_size rows. Throws QueryError without criteria or on a bad cursor.
  SearchPage search(const SearchCriteria& criteria,
                    std::size_t page_size = kGazetteerPageSize) const;

  /// Closest place to the cell center within kNearestPlaceRadiusM.
  std::optional<Place> nearest_place(const GridKey& grid) const;

  /// Records imagery for every place in the cell; returns places whose date changed.
  std::size_t register_image(const GridKey& grid, Date acquired);
  std::size_t register_images(std::span<const ImageRegistration> images);

  /// All records in load order (test oracles, CLI).
  std::vector<Place> places() const;

  /// Country id for a name or alias, case-insensitive.
  std::optional<std::string> resolve_country(std::string_view text) const;
  std::optional<std::string> resolve_state(std::string_view country_id, std::string_view text) const;

 private:
  struct Data;

  std::size_t register_locked(const GridKey& grid, Date acquired);
  void rebuild_indices();

  std::unique_ptr<Data> data_;
  mutable std::unique_ptr<std::shared_mutex> mutex_;
};

}  // namespace terratile
