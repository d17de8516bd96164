/* C interface to the ontokg knowledge-graph engine. */

#ifndef ONTOKG_H
#define ONTOKG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verdict codes returned by `ontokg_check_alignment`.
 */
enum OntokgAlignment
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  ONTOKG_ALIGNMENT_ALIGNED = 0,
  ONTOKG_ALIGNMENT_UNKNOWN_PROPERTY = 1,
  ONTOKG_ALIGNMENT_UNKNOWN_TYPE = 2,
  ONTOKG_ALIGNMENT_DOMAIN_VIOLATION = 3,
  ONTOKG_ALIGNMENT_RANGE_VIOLATION = 4,
};
#ifndef __cplusplus
typedef int32_t OntokgAlignment;
#endif // __cplusplus

/**
 * Status codes returned by fallible functions.
 */
enum OntokgStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  ONTOKG_STATUS_OK = 0,
  /**
   * A pointer was NULL, a string was not UTF-8, or a value was out of
   * range.
   */
  ONTOKG_STATUS_INVALID_ARGUMENT = -1,
  /**
   * File could not be read or written.
   */
  ONTOKG_STATUS_IO = -2,
  /**
   * The input parsed but violated the format or a store constraint.
   */
  ONTOKG_STATUS_DATA = -3,
  /**
   * A referenced record does not exist.
   */
  ONTOKG_STATUS_NOT_FOUND = -4,
};
#ifndef __cplusplus
typedef int32_t OntokgStatus;
#endif // __cplusplus

/**
 * Opaque handle to a knowledge-graph store.
 */
typedef struct OntokgKg OntokgKg;

/**
 * Opaque handle to a loaded, immutable ontology schema.
 */
typedef struct OntokgSchema OntokgSchema;

/**
 * Graph statistics as plain C data.
 */
typedef struct OntokgGraphStats {
  size_t num_entities;
  size_t num_relations;
  double avg_entity_degree;
  double unique_entities_per_relation;
  double relation_diversity_per_pair;
} OntokgGraphStats;

/**
 * EM/F1 verdict for one scored answer.
 */
typedef struct OntokgScore {
  /**
   * 1 when the prediction exactly matches a gold (after normalization
   * and alias expansion), else 0.
   */
  int32_t exact_match;
  double f1;
} OntokgScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. Never NULL;
 * empty before the first failure. Valid until the next failing call.
 */
const char *ontokg_last_error_message(void);

/**
 * Load a schema file (the compiled newline-delimited format).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string pointer.
 */
struct OntokgSchema *ontokg_schema_load(const char *path);

/**
 * # Safety
 * `schema` must be a pointer from `ontokg_schema_load`, not yet freed.
 */
void ontokg_schema_free(struct OntokgSchema *schema);

/**
 * # Safety
 * `schema` must be valid or NULL (NULL counts as zero).
 */
size_t ontokg_schema_type_count(const struct OntokgSchema *schema);

/**
 * # Safety
 * `schema` must be valid or NULL (NULL counts as zero).
 */
size_t ontokg_schema_property_count(const struct OntokgSchema *schema);

/**
 * Verify one triplet backbone against the schema. Returns an
 * `OntokgAlignment` code (>= 0), or a negative status on bad arguments.
 *
 * # Safety
 * `schema` must be valid; the id arguments must be NUL-terminated strings.
 */
int32_t ontokg_check_alignment(const struct OntokgSchema *schema,
                               const char *subject_type,
                               const char *property,
                               const char *object_type);

/**
 * Create an empty store.
 */
struct OntokgKg *ontokg_kg_new(void);

/**
 * Open a store from a snapshot file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string pointer.
 */
struct OntokgKg *ontokg_kg_import(const char *path);

/**
 * Write the store's snapshot to a file.
 *
 * # Safety
 * `kg` must be valid; `path` must be a NUL-terminated string pointer.
 */
int32_t ontokg_kg_export(const struct OntokgKg *kg, const char *path);

/**
 * # Safety
 * `kg` must be a pointer from `ontokg_kg_new`/`ontokg_kg_import`, not yet
 * freed.
 */
void ontokg_kg_free(struct OntokgKg *kg);

/**
 * # Safety
 * `kg` must be valid or NULL (NULL counts as zero).
 */
size_t ontokg_kg_entity_count(const struct OntokgKg *kg);

/**
 * # Safety
 * `kg` must be valid or NULL (NULL counts as zero).
 */
size_t ontokg_kg_triplet_count(const struct OntokgKg *kg);

/**
 * Insert an entity (idempotent on label + type). Returns the entity id
 * (>= 1), or a negative status.
 *
 * # Safety
 * `kg` must be valid and not shared with other threads during the call;
 * string arguments must be NUL-terminated.
 */
int64_t ontokg_kg_insert_entity(struct OntokgKg *kg, const char *label, const char *type_id);

/**
 * Record one more surface form for an entity.
 *
 * # Safety
 * Same contract as `ontokg_kg_insert_entity`.
 */
int32_t ontokg_kg_add_alias(struct OntokgKg *kg, uint64_t entity_id, const char *alias);

/**
 * Store a triplet. `property_id` may be NULL for a surface relation, in
 * which case `label` carries the surface text. `qualifiers_json` may be
 * NULL or a JSON list of `{"relation", "object"}` objects. Returns 0 when
 * stored, 1 when it merged into an existing duplicate, negative on error.
 *
 * # Safety
 * Same contract as `ontokg_kg_insert_entity`.
 */
int32_t ontokg_kg_insert_triplet(struct OntokgKg *kg,
                                 uint64_t subject_id,
                                 const char *property_id,
                                 const char *label,
                                 uint64_t object_id,
                                 bool aligned,
                                 const char *qualifiers_json);

/**
 * Size (entity count) of the k-hop neighborhood around the seed ids.
 * Unknown seeds are ignored. Returns a negative status on bad arguments.
 *
 * # Safety
 * `kg` must be valid; `seeds` must point to `seed_count` readable ids.
 */
int64_t ontokg_kg_neighborhood_size(const struct OntokgKg *kg,
                                    const uint64_t *seeds,
                                    size_t seed_count,
                                    size_t hops);

/**
 * Fill `out` with the five structural statistics.
 *
 * # Safety
 * `kg` must be valid; `out` must point to writable memory for one struct.
 */
int32_t ontokg_kg_stats(const struct OntokgKg *kg, struct OntokgGraphStats *out);

/**
 * Percentage (0..=100) of stored triplets whose backbone re-verifies as
 * aligned under the schema; 100 for an empty store. Negative on error.
 *
 * # Safety
 * Both handles must be valid.
 */
double ontokg_entailment_percentage(const struct OntokgKg *kg, const struct OntokgSchema *schema);

/**
 * Score a predicted answer against gold answers with the store's alias
 * expansion.
 *
 * # Safety
 * `kg` must be valid; `golds` must point to `gold_count` NUL-terminated
 * strings; `out` must be writable.
 */
int32_t ontokg_score_answer(const struct OntokgKg *kg,
                            const char *predicted,
                            const char *const *golds,
                            size_t gold_count,
                            struct OntokgScore *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ONTOKG_H */
