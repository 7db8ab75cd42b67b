# Copyright (c) 2025-2026 Luc Vincent. All Rights Reserved.
# Envelopes test suite
