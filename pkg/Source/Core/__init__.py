# ClassroomPeers Core Foundation
