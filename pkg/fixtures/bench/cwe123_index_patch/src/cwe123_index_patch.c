/* Table patching routine.
 * CWE-123: attacker-controlled offset and value form a write-what-where. */
#include <string.h>

void patch_entry(char *table, unsigned long offset, const char *value) {
    memcpy(table + offset, value, 8);
}
