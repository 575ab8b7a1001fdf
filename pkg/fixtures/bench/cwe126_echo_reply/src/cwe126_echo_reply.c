/* Echo responder.
 * CWE-126: the reply length is trusted, over-reading the request buffer. */
#include <string.h>

void build_reply(char *reply, const char *req, unsigned short req_len, unsigned short echo_len) {
    (void)req_len;
    memcpy(reply, req, echo_len);
}
