"""
Constants for device geometry profiles and latency defaults.
"""

# Latencies in microseconds
DEFAULT_T_PROG = 700.0
DEFAULT_T_READ = 60.0
DEFAULT_T_ERASE = 3500.0

# Emulated commercial device: 1056 MiB zones of 88 blocks spread over 4 LUNs
ZN540_PROFILE = {
    "channels": 4,
    "luns_per_channel": 1,
    "pages_per_block": 768,
    "page_size": 16 * 1024,
    "blocks_per_zone": 88,
    "zones_total": 48,
    "max_open_zones": 14,
}

# Smallest geometry that still exercises striping across LUNs
G_SMALL_PROFILE = {
    "channels": 4,
    "luns_per_channel": 1,
    "pages_per_block": 4,
    "page_size": 4 * 1024,
    "blocks_per_zone": 8,
    "zones_total": 4,
    "max_open_zones": 2,
}

# ZN540 layout with shorter blocks, used by the workload experiments
DESK_PROFILE = {**ZN540_PROFILE, "pages_per_block": 16}

PROFILES = {
    "zn540": ZN540_PROFILE,
    "g-small": G_SMALL_PROFILE,
    "desk": DESK_PROFILE,
}

# Accepted shorthand keys in [device] sections
DEVICE_KEY_ALIASES = {
    "luns": "luns_total",
    "P": "pages_per_block",
    "page": "page_size",
    "zones": "zones_total",
    "open": "max_open_zones",
    "E": "blocks_per_lun_per_zone",
}

REQUIRED_DEVICE_FIELDS = (
    "channels",
    "pages_per_block",
    "page_size",
    "blocks_per_zone",
    "zones_total",
    "max_open_zones",
)
