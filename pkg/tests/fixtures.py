"""Small hand-built input files shared by several test modules."""

LOG_10 = (
    "u1\t1000\tA\tx\n"
    "u1\t1060\tA\ty\n"
    "u1\t1120\tB\tz\n"
    "u1\t1180\tB\tx\n"
    "u1\t1240\tA\tx\n"
    "u1\t9000\tA\ty\n"
    "u2\t2024-01-01T00:00:00Z\tC\tw\n"
    "u2\t2024-01-01T00:01:00Z\tA\tx\n"
    "u2\t2024-01-01T00:02:00+00:00\tA\ty\n"
    "u2\t2024-01-01T00:03:00\tC\tw\n"
)

# (user, timestamp, artist, track) transcribed by hand from LOG_10
LOG_10_ROWS = [
    ("u1", 1000.0, "A", "x"),
    ("u1", 1060.0, "A", "y"),
    ("u1", 1120.0, "B", "z"),
    ("u1", 1180.0, "B", "x"),
    ("u1", 1240.0, "A", "x"),
    ("u1", 9000.0, "A", "y"),
    ("u2", 1704067200.0, "C", "w"),
    ("u2", 1704067260.0, "A", "x"),
    ("u2", 1704067320.0, "A", "y"),
    ("u2", 1704067380.0, "C", "w"),
]

TAGS = (
    "A\tx\trock, Indie\n"
    "A\ty\tROCK\n"
    "B\tz\t\n"
    "C\tw\tjazz\n"
)

# stats of LOG_10 with TAGS: only u1's first five plays form a kept session
LOG_10_STATS = {
    "total_logs": 10,
    "total_users": 2,
    "total_sessions": 1,
    "unique_songs": 5,
    "unique_tags": 3,
    "avg_songs_per_session": 5.0,
    "avg_logs_per_user": 5.0,
}
