#include <stdio.h>
#include <string.h>
#include "corpusdex.h"

int main(void) {
    CdxIndex *idx = NULL;
    if (cdx_index_in_memory(&idx) != CDX_STATUS_OK) return 10;
    uint64_t id = 0;
    bool skipped = false;
    cdx_index_add(idx, "climate and change", "a", "eng", true, &id, &skipped);
    cdx_index_add(idx, "climate change", "b", NULL, true, &id, &skipped);
    cdx_index_refresh(idx);
    uint64_t n = 0;
    if (cdx_phrase_count(idx, "climate change", 0, &n) != CDX_STATUS_OK || n != 1) return 11;
    if (cdx_phrase_count(idx, "climate change", 1, &n) != CDX_STATUS_OK || n != 2) return 12;
    if (cdx_count_json(idx, "{\"bogus\":1}", &n) != CDX_STATUS_INVALID_QUERY) return 13;
    char *msg = cdx_last_error_message();
    if (msg == NULL || strlen(msg) == 0) return 14;
    cdx_string_free(msg);
    CdxBulkParams p;
    if (cdx_plan_bulk_params(10240, 100u * 1024 * 1024, 4, 1ull << 40, &p) != CDX_STATUS_OK) return 15;
    if (p.chunk_size != 10240) return 16;
    cdx_index_free(idx);
    printf("ok\n");
    return 0;
}
