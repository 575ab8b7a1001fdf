/* Session setup.
 * CWE-401: the error path drops the only reference without release. */
#include <stdlib.h>
#include <string.h>

struct session { char token[32]; int fd; };

int open_session(const char *token, int fd, struct session **out) {
    struct session *s = malloc(sizeof(*s));
    if (!s) return -1;
    memcpy(s->token, token, sizeof(s->token));
    if (fd < 0) return -1;
    s->fd = fd;
    *out = s;
    return 0;
}
