/* Write-queue drain.
 * CWE-416: the entry is released before its payload is consumed. */
#include <stdlib.h>
#include <string.h>

struct entry { char *payload; unsigned int len; };

unsigned int drain(struct entry *e, char *out) {
    unsigned int n = e->len;
    free(e->payload);
    memcpy(out, e->payload, n);
    return n;
}
