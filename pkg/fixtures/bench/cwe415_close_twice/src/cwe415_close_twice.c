/* Channel shutdown.
 * CWE-415: both the close helper and the caller release the buffer. */
#include <stdlib.h>

struct channel { char *buf; };

void close_channel(struct channel *c) {
    free(c->buf);
}

void shutdown_channel(struct channel *c) {
    close_channel(c);
    free(c->buf);
}
