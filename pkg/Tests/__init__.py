# ClassroomPeers test suites
