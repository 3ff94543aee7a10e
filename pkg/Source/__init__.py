# ClassroomPeers - peer effects from paired test scores
__version__ = "1.0.0"
