# ClassroomPeers Interface Layer
