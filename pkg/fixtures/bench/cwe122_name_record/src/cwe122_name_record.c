/* Name record store.
 * CWE-122: heap allocation sized from one field, filled from another. */
#include <stdlib.h>
#include <string.h>

char *store_name(const char *name, unsigned char alloc_len, unsigned short data_len) {
    char *slot = malloc(alloc_len);
    if (!slot) return 0;
    memcpy(slot, name, data_len);
    return slot;
}
